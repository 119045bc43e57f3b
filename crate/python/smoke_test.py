#!/usr/bin/env python3
"""End-to-end smoke test for the rws_py extension module.

Builds the module with cargo, loads it, and runs a miniature version of
the whole pipeline: train a standard/robust pair from a shared init,
extract a signature, quantize it, patch the standard model, and check
the deterministic guarantees (round-trips, patch identity, quantization
bound, storage rows). Training sizes are tiny so the whole script runs
in well under a minute.

Usage: python3 python/smoke_test.py [--skip-build]
"""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_module() -> None:
    subprocess.run(
        ["cargo", "build", "-p", "rws-py", "--release"],
        cwd=REPO,
        check=True,
    )


def import_module():
    built = REPO / "target" / "release" / "librws_py.so"
    if not built.exists():  # macOS names it .dylib
        built = REPO / "target" / "release" / "librws_py.dylib"
    stage = Path(tempfile.mkdtemp(prefix="rws-py-"))
    shutil.copy2(built, stage / "rws_py.so")
    sys.path.insert(0, str(stage))
    import rws_py

    return rws_py


def main() -> None:
    if "--skip-build" not in sys.argv[1:]:
        build_module()
    rws = import_module()

    checks = 0

    def ok(label: str, cond: bool, detail: str = "") -> None:
        nonlocal checks
        if not cond:
            print(f"FAIL {label} {detail}")
            sys.exit(1)
        checks += 1
        print(f"ok {checks:2d}  {label}{'  ' + detail if detail else ''}")

    kinds = rws.corruption_kinds()
    ok("corruption kinds", len(kinds) == 9, f"{len(kinds)} kinds")

    err = rws.grad_check("mlp", seed=7)
    ok("gradient check (mlp)", err <= 1e-4, f"max rel err {err:.2e}")

    # A deliberately tiny training setup: enough to exercise every code
    # path, not enough to reach the accuracies the full pipeline gets.
    small = dict(epochs=2, train_n=96, seed=11)
    init = rws.train("synthB", arch="convnet", **small)
    std = rws.train("synthA", arch="convnet", init=init, **small)
    std2 = rws.train("synthA", arch="convnet", init=init, **small)
    ok(
        "training is deterministic",
        std.to_bytes() == std2.to_bytes(),
        f"{std.storage_bytes()} payload bytes",
    )

    robust = rws.train(
        "synthA", arch="convnet", init=init, corruption="gaussian_noise:5", **small
    )
    sig = rws.extract_rws(
        std, init, robust, mode="vector", layers_kept=2, corruption="gaussian_noise:5"
    )
    ok(
        "signature metadata",
        sig.corruption == "gaussian_noise:5"
        and sig.mode == "vector"
        and sig.layers_kept == 2
        and sig.covered_groups == ["conv1", "conv2"],
        repr(sig),
    )
    ok(
        "signature targets the standard model",
        sig.source_fingerprint == std.arch_fingerprint(),
    )

    patched = rws.patch(std, [(sig, 1.0)])
    unpatched = rws.patch(std, [])
    ok("empty patch is the identity", unpatched.to_bytes() == std.to_bytes())
    ok(
        "patch changes covered groups only",
        patched.tensor_data("fc2.weight") == std.tensor_data("fc2.weight")
        and patched.tensor_data("conv1.weight") != std.tensor_data("conv1.weight"),
    )

    q8 = rws.quantize(sig, 8)
    back = rws.dequantize(q8)
    worst = 0.0
    for name in sig.checkpoint().tensor_names():
        scale = q8.checkpoint().tensor_data(name + "#scale")[0]
        orig = sig.checkpoint().tensor_data(name)
        deq = back.checkpoint().tensor_data(name)
        worst = max(
            worst, max(abs(a - b) - scale / 2 for a, b in zip(orig, deq))
        )
    ok("8-bit bound |dequant-orig| <= scale/2", worst <= 0.0, f"slack {worst:.2e}")

    rows = rws.storage_report(std, [sig])
    names = [name for name, _, _ in rows]
    ok(
        "storage report rows",
        names
        == [
            "standard",
            "standard+signatures@f32",
            "standard+signatures@16bit",
            "standard+signatures@8bit",
            "ensemble-full-copies",
        ],
        f"{len(rows)} rows",
    )

    with tempfile.TemporaryDirectory() as td:
        path = str(Path(td) / "std.ckpt")
        std.write(path)
        again = rws.Checkpoint.read(path)
        ok("checkpoint file round-trip", again.to_bytes() == std.to_bytes())

        spath = str(Path(td) / "sig.rws")
        q8.write(spath)
        sagain = rws.Signature.read(spath)
        ok(
            "signature file round-trip",
            sagain.quant_bits == 8
            and sagain.checkpoint().to_bytes() == q8.checkpoint().to_bytes(),
        )

    acc = rws.evaluate(std, "synthA", n=64)
    ra = rws.evaluate(std, "synthA", n=64, corruption="gaussian_noise:5")
    ok("evaluation returns fractions", 0.0 <= ra <= acc <= 1.0, f"TA {acc:.3f} RA {ra:.3f}")

    csv = rws.relationship_csv([sig, q8])
    ok("cosine report is CSV", csv.splitlines()[0].startswith(","), f"{len(csv)} bytes")

    print(f"\nall {checks} smoke checks passed")


if __name__ == "__main__":
    main()
