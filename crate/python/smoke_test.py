"""Smoke test for the tailbound extension: run after `pip install -e crates/py`."""

import json
import math

import tailbound


def check(name, ok):
    print(f"{'PASS' if ok else 'FAIL'} {name}")
    return ok


def main():
    results = []

    pois = tailbound.Dist(json.dumps({"family": "poisson", "params": {"lambda": 0.5}}))
    lo = pois.lower_bound("upper", 0.3)
    results.append(check("poisson boundary value", abs(lo["value"] - (1 - math.exp(-0.5))) < 1e-15))

    gam = tailbound.Dist('{"family":"gamma","params":{"alpha":2.5}}')
    for x in (0.5, 2.0, 6.0):
        ex = gam.exact_tail("upper", x)["value"]
        up = gam.upper_bound("upper", x)["value"]
        lb = gam.lower_bound("upper", x)["value"]
        results.append(check(f"gamma sandwich x={x}", lb <= ex <= up))

    q = gam.quantile("upper", 0.01)
    results.append(check("gamma quantile", abs(gam.exact_tail("upper", q["x"])["value"] - 0.01) < 1e-9))

    try:
        tailbound.Dist("{not json")
        results.append(check("malformed json raises", False))
    except ValueError:
        results.append(check("malformed json raises", True))

    mix = tailbound.Mixture(1.0, 3.0, 0.2)
    want = (math.log(0.8 / 0.2) + 2.0) / math.log(3.0)
    results.append(check("mixture threshold", abs(mix.theta_tilde - want) < 1e-12))
    results.append(check("mixture classify", mix.classify([0, 1, 7, 12]) == [y > want for y in (0, 1, 7, 12)]))
    mc = mix.mc_misid(20000, seed=3)
    exact = mix.report()["expected_misid"]
    results.append(check("mixture mc brackets exact", mc["error"]["ci_lo"] <= exact <= mc["error"]["ci_hi"]))

    rep = tailbound.verify(families=["binomial"], seed=42)
    results.append(check("verify binomial", rep["summary"]["n_fail"] == 0 and len(rep["rows"]) > 0))

    n_fail = results.count(False)
    print(f"{len(results) - n_fail}/{len(results)} passed")
    raise SystemExit(1 if n_fail else 0)


if __name__ == "__main__":
    main()
