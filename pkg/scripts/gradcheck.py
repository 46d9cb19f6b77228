"""Finite-difference gradient check over every parameter of the reduced model."""

import argparse

from cvit.experiments import gradcheck_reduced


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model-seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=0)
    args = ap.parse_args()
    res, seconds = gradcheck_reduced(args.model_seed, args.data_seed)
    print(f"checked {res.n_checked} parameters in {seconds:.1f}s")
    print(f"max rel error {res.max_rel_error:.3e}  max abs error {res.max_abs_error:.3e}  worst {res.worst}")
    for name, err in sorted(res.per_param.items(), key=lambda kv: -kv[1])[:10]:
        print(f"  {name:<32} {err:.3e}")


if __name__ == "__main__":
    main()
