"""Train VARADE and both baselines on one synthetic stream; print the AUCs.

    python scripts/desk_experiment.py --steps 3000 --window 32
    python scripts/desk_experiment.py --synth acc_noise=2.0 burst_acc=6.0 --json
"""

import argparse
import json
import logging
from dataclasses import fields

from varade.desk import DeskConfig, run_desk


def parse_kv(items):
    out = {}
    for item in items:
        key, _, raw = item.partition("=")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    defaults = DeskConfig()
    for f in fields(DeskConfig):
        if f.name == "synth":
            continue
        p.add_argument("--" + f.name.replace("_", "-"), type=type(getattr(defaults, f.name)), default=getattr(defaults, f.name))
    p.add_argument("--synth", nargs="*", default=[], metavar="KEY=VALUE", help="extra generator settings")
    p.add_argument("--json", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    args = vars(p.parse_args())
    as_json, verbose = args.pop("json"), args.pop("verbose")
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    args["synth"] = parse_kv(args["synth"])

    r = run_desk(DeskConfig(**args))
    if as_json:
        print(json.dumps(vars(r), indent=2))
        return
    print(f"stream      {r.n_test} samples, {r.minutes_simulated:.1f} min, {r.n_anomalous} anomalous")
    print(f"train loss  {r.train_loss[0]:.4f} -> {r.train_loss[-1]:.4f}")
    for name in ("varade", "knn", "iforest"):
        print(f"{name:<11} auc {getattr(r, 'auc_' + name):.4f}")
    print("seconds    ", {k: round(v, 1) for k, v in r.seconds.items()})


if __name__ == "__main__":
    main()
