"""``uae`` command-line entry point.

Every command writes a JSON manifest before any other artifact: ``manifest.json``
in the output directory, or ``<csv>.<method>.m<m>.seed<seed>.manifest.json``
beside the results CSV for ``eval`` and ``lasso``. Reruns with the same
manifest reproduce the same bytes.
"""
import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from ._accel import set_threads
from .baselines import (
    LAMBDA_GRID,
    LassoConfig,
    lasso_recover_batch,
    pairwise_scatter,
    pca_fit,
    random_gaussian_matrix,
    tune_lambda,
)
from .data_io import (
    idx_image_shape,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    upsert_eval_rows,
    write_csv,
    write_pgm_grid,
    write_train_report,
)
from .errors import UaeError, ValidationError
from .evaluation import STREAM_EVAL, EvalReport, evaluate_model, knn_predict, l2_per_image, principal_angle, uae_reconstruct
from .linalg import finite_diff_grad, sym_eig_topm
from .nets import backward, build_model, encode_mean
from .rng import Rng
from .sampler import ChainConfig, sample_chain
from .training import (
    TrainConfig,
    default_norm_bound,
    fit,
    fit_with_line_search,
    loss_at,
    transfer_fit,
)

log = logging.getLogger("uae")

MANIFEST_SCHEMA = 1
STREAM_RANDOM_W = 5
STREAM_LASSO_NOISE = 13


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out, command, config, seed, inputs, outputs, name="manifest.json"):
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": MANIFEST_SCHEMA,
        "package_version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs if p},
        "outputs": [str(out / o) for o in outputs],
    }
    (out / name).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _csv_manifest_name(csv_path, method, m, seed):
    # several runs share one results CSV; each keeps its own manifest
    return f"{csv_path.stem}.{method}.m{m}.seed{seed}.manifest.json"


def _config(args):
    skip = {"func", "command"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip}


def _sizes(text):
    text = (text or "").strip()
    return tuple(int(s) for s in text.split(",") if s.strip())


def _floats(text):
    return tuple(float(s) for s in text.split(",") if s.strip())


def _dataset(args):
    counts = _sizes(args.split_counts) if getattr(args, "split_counts", None) else None
    return load_dataset(args.data, getattr(args, "labels", None), _floats(args.splits), counts)


def _image_shape(args, n):
    try:
        rows, cols = idx_image_shape(args.data)
        if rows * cols == n:
            return rows, cols
    except (UaeError, OSError):
        pass
    side = int(round(math.sqrt(n)))
    return (side, side) if side * side == n else (1, n)


def _add_data(p, labels=False):
    p.add_argument("--data", type=Path, required=True, help="IDX image file (magic 0x00000803)")
    if labels:
        p.add_argument("--labels", type=Path, help="IDX label file (magic 0x00000801)")
    p.add_argument("--splits", default="0.7,0.15,0.15", help="train,valid,test fractions")
    p.add_argument("--split-counts", default=None, help="explicit train,valid,test row counts")


def _add_training(p):
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--patience", type=int, default=None, help="early-stopping patience (default: epochs)")
    p.add_argument("--norm-k", type=float, default=None, help="Frobenius bound on W (default sqrt(m n); 0 disables)")
    p.add_argument("--penalty", type=float, default=None, help="fixed penalty multiplier (default: line search)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-seed", type=int, default=None)


def _train_config(args, m, n, **over):
    k = default_norm_bound(m, n) if args.norm_k is None else args.norm_k
    cfg = dict(
        lr=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        patience_epochs=args.patience,
        sigma=args.sigma,
        norm_bound_k=k,
        penalty_multiplier=args.penalty or 0.0,
        seed=args.seed,
        decoder_family=getattr(args, "decoder_family", "gaussian"),
        eval_seed=args.eval_seed,
    )
    cfg.update(over)
    return TrainConfig(**cfg)


def _run_fit(data, cfg, model, explicit_penalty):
    if explicit_penalty is None:
        return fit_with_line_search(data, cfg, model)
    return fit(data, cfg, model)


def cmd_train(args):
    if args.freeze_encoder and args.freeze_decoder:
        raise ValidationError("--freeze-encoder and --freeze-decoder conflict")
    data = _dataset(args)
    n = data.n
    hidden = _sizes(args.hidden)
    W = None
    if args.random_encoder_seed is not None:
        W = random_gaussian_matrix(args.m, n, Rng(args.random_encoder_seed, STREAM_RANDOM_W))
    model = build_model(
        n,
        args.m,
        hidden=hidden,
        sigma=args.sigma,
        family=args.decoder_family,
        output_activation=args.output_activation,
        acquisition_hidden=_sizes(args.acquisition) if args.acquisition else None,
        features=args.features,
        seed=args.seed,
        W=W,
    )
    cfg = _train_config(args, args.m, model.channel.encoder.l, freeze_encoder=args.freeze_encoder,
                        freeze_decoder=args.freeze_decoder)
    out = args.out
    config = _config(args)
    config["resolved"] = cfg.to_dict()
    _write_manifest(out, "train", config, args.seed, [args.data], ["model.uae", "train_report.csv"])
    model, report = _run_fit(data, cfg, model, args.penalty)
    save_checkpoint(model, out / "model.uae")
    write_train_report(out / "train_report.csv", report)
    log.info("best epoch %d, valid loss %.6g, ||W||_F %.4g", report.best_epoch, report.best_valid_loss,
             float(np.linalg.norm(model.channel.encoder.W)))
    return 0


def cmd_eval(args):
    model = load_checkpoint(args.model)
    if args.m is not None and args.m != model.m:
        raise ValidationError(f"--m {args.m} does not match the checkpoint's m={model.m}")
    data = _dataset(args)
    X = getattr(data, args.split)
    eval_seed = args.eval_seed
    _write_manifest(args.out.parent, "eval", _config(args), eval_seed, [args.model, args.data],
                    [args.out.name] + ([args.pgm.name] if args.pgm else []),
                    name=_csv_manifest_name(args.out, args.method, model.m, args.seed))
    rep = evaluate_model(model, X, eval_seed, args.method, args.seed)
    upsert_eval_rows(args.out, [rep])
    if args.pgm:
        k = min(args.grid, X.shape[0])
        X_hat = uae_reconstruct(model, X[:k], Rng(eval_seed, STREAM_EVAL))
        write_pgm_grid(args.pgm, np.vstack([X[:k], X_hat]), _image_shape(args, model.n), n_cols=k)
    print(f"{rep.method} m={rep.m} l2/image={rep.mean_l2_per_image:.6g} +- {rep.std_err:.3g}")
    return 0


def cmd_lasso(args):
    data = _dataset(args)
    n = data.n
    W = random_gaussian_matrix(args.m, n, Rng(args.seed, STREAM_RANDOM_W))
    out = args.out
    _write_manifest(out.parent, "lasso", _config(args), args.seed, [args.data], [out.name],
                    name=_csv_manifest_name(out, args.method, args.m, args.seed))
    noise = Rng(args.eval_seed, STREAM_LASSO_NOISE)
    valid = data.valid[: args.max_valid] if args.max_valid else data.valid
    test = data.test[: args.max_test] if args.max_test else data.test
    Yv = valid @ W.T + args.sigma * noise.normal((valid.shape[0], args.m))
    Yt = test @ W.T + args.sigma * noise.normal((test.shape[0], args.m))
    kw = dict(max_iters=args.max_iters, tol=args.tol)
    lam, errs = tune_lambda(Yv, valid, W, _floats(args.lambdas), **kw)
    X_hat = lasso_recover_batch(Yt, W, LassoConfig(lam=lam, **kw))
    mean, se = l2_per_image(test, X_hat)
    upsert_eval_rows(out, [EvalReport(args.method, args.m, mean, se, test.shape[0], args.seed)])
    print(f"LASSO m={args.m} lambda={lam:g} l2/image={mean:.6g} +- {se:.3g}")
    return 0


def cmd_pca(args):
    data = _dataset(args)
    out = args.out
    files = ["components.csv", "pca_metrics.csv"]
    _write_manifest(out, "pca", _config(args), args.seed, [args.data, args.labels], files)
    pca = pca_fit(data.train, args.m)
    _, scatter_vecs = sym_eig_topm(pairwise_scatter(data.train), args.m)
    angle = principal_angle(pca.components, scatter_vecs)
    write_csv(out / "components.csv", ["eigenvalue"] + [f"c{j}" for j in range(data.n)],
              [[v, *row] for v, row in zip(pca.eigenvalues, pca.components)])
    metrics = [("m", args.m), ("scatter_angle_deg", angle)]
    recon = pca.reconstruct(data.test)
    metrics.append(("test_l2_per_image", l2_per_image(data.test, recon)[0]))
    if data.train_labels is not None and data.test.shape[0]:
        pred = knn_predict(pca.transform(data.train), data.train_labels, pca.transform(data.test), args.k)
        metrics.append(("knn_accuracy", float(np.mean(pred == data.test_labels))))
    write_csv(out / "pca_metrics.csv", ["metric", "value"], metrics)
    print(f"PCA m={args.m} angle to pairwise-scatter eigenvectors = {angle:.3g} deg")
    return 0


def cmd_sample(args):
    model = load_checkpoint(args.model)
    out = args.out
    files = ["samples.csv"] + (["samples.pgm"] if args.pgm else [])
    _write_manifest(out, "sample", _config(args), args.seed, [args.model, args.data], files)
    if args.data:
        x0 = _dataset(args).train[args.x0_index]
    else:
        x0 = np.zeros(model.n)
    cfg = ChainConfig(args.burn_in, args.n_samples, args.thin, args.decoder_std, args.seed)
    S = sample_chain(x0, model.channel, model.decoder, cfg)
    write_csv(out / "samples.csv", [f"x{j}" for j in range(model.n)], S.tolist())
    if args.pgm:
        side = int(round(math.sqrt(model.n)))
        shape = (side, side) if side * side == model.n else (1, model.n)
        write_pgm_grid(out / "samples.pgm", S, shape)
    return 0


def cmd_transfer(args):
    source = load_checkpoint(args.source)
    data = _dataset(args)
    cfg = _train_config(args, source.m, source.channel.encoder.l, decoder_family=source.decoder.family)
    out = args.out
    config = _config(args)
    config["resolved"] = cfg.to_dict()
    _write_manifest(out, "transfer", config, args.seed, [args.source, args.data],
                    ["model.uae", "train_report.csv"])
    model, report = transfer_fit(source, data, args.mode, cfg)
    save_checkpoint(model, out / "model.uae")
    write_train_report(out / "train_report.csv", report)
    return 0


def cmd_dimreduce(args):
    model = load_checkpoint(args.model)
    data = _dataset(args)
    if data.train_labels is None:
        raise ValidationError("dimreduce needs --labels")
    out = args.out
    files = ["projections.csv", "dimreduce_metrics.csv"]
    _write_manifest(out, "dimreduce", _config(args), args.seed, [args.model, args.data, args.labels], files)
    enc = model.channel.encoder
    Ztr, Zte = encode_mean(enc, data.train), encode_mean(enc, data.test)
    pca = pca_fit(data.train, model.m)
    acc_uae = float(np.mean(knn_predict(Ztr, data.train_labels, Zte, args.k) == data.test_labels))
    acc_pca = float(np.mean(
        knn_predict(pca.transform(data.train), data.train_labels, pca.transform(data.test), args.k)
        == data.test_labels))
    write_csv(out / "projections.csv", ["split", "label"] + [f"z{j}" for j in range(model.m)],
              [["test", int(lab), *z] for lab, z in zip(data.test_labels, Zte)])
    write_csv(out / "dimreduce_metrics.csv", ["method", "m", "knn_accuracy"],
              [["UAE", model.m, acc_uae], ["PCA", model.m, acc_pca]])
    print(f"kNN(k={args.k}) accuracy: UAE {acc_uae:.4f}  PCA {acc_pca:.4f}")
    return 0


def gradcheck_architectures(n_archs, seed):
    """Random small architectures with their gradient-check worst relative errors."""
    rng = Rng(seed, 21)
    results = []
    for a in range(n_archs):
        n = 2 + int(rng.integers(9, None))
        m = 1 + int(rng.integers(n, None))
        hidden = tuple(1 + int(h) for h in rng.integers(16, (1 + int(rng.integers(2, None)),)))
        use_acq = a % 2 == 1
        family = "bernoulli" if a % 3 == 2 else "gaussian"
        out_act = "sigmoid" if (family == "bernoulli" or a % 2 == 0) else "identity"
        model = build_model(
            n, m, hidden=hidden, sigma=0.1 + rng.uniform(), family=family, output_activation=out_act,
            acquisition_hidden=(1 + int(rng.integers(16, None)),) if use_acq else None,
            features=(1 + int(rng.integers(n + 2, None))) if use_acq else None, seed=seed + a,
        )
        X = rng.uniform((4, n))
        z = rng.normal((4, model.m))
        _, tape = loss_at(X, model.channel, model.decoder, z)
        analytic = backward(tape).all()
        numeric = finite_diff_grad(lambda: loss_at(X, model.channel, model.decoder, z)[0], model.params(), 1e-5)
        worst = 0.0
        for ga, gn in zip(analytic, numeric):
            worst = max(worst, float(np.max(np.abs(ga - gn) / np.maximum(np.abs(gn), 1e-6), initial=0.0)))
        results.append({"arch": a, "n": n, "m": model.m, "hidden": hidden, "acquisition": use_acq,
                        "family": family, "max_rel_err": worst})
    return results


def cmd_gradcheck(args):
    out = args.out
    _write_manifest(out, "gradcheck", _config(args), args.seed, [], ["gradcheck.csv"])
    results = gradcheck_architectures(args.n_archs, args.seed)
    write_csv(out / "gradcheck.csv", ["arch", "n", "m", "hidden", "acquisition", "family", "max_rel_err", "pass"],
              [[r["arch"], r["n"], r["m"], "x".join(map(str, r["hidden"])), r["acquisition"], r["family"],
                r["max_rel_err"], r["max_rel_err"] < args.tol] for r in results])
    failed = [r for r in results if not r["max_rel_err"] < args.tol]
    for r in results:
        print(f"arch {r['arch']}: n={r['n']} m={r['m']} hidden={r['hidden']} max rel err {r['max_rel_err']:.2e}")
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="uae", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a UAE (or RP-UAE with --freeze-encoder --random-encoder-seed)")
    _add_data(t)
    t.add_argument("--m", type=int, required=True)
    _add_training(t)
    t.add_argument("--hidden", default="500,500", help="decoder hidden sizes")
    t.add_argument("--decoder-family", choices=["gaussian", "bernoulli"], default="gaussian")
    t.add_argument("--output-activation", choices=["sigmoid", "identity"], default="sigmoid")
    t.add_argument("--acquisition", default=None, help="hidden sizes of an MLP acquisition net")
    t.add_argument("--features", type=int, default=None, help="acquisition output size l")
    t.add_argument("--freeze-encoder", action="store_true")
    t.add_argument("--freeze-decoder", action="store_true")
    t.add_argument("--random-encoder-seed", type=int, default=None,
                   help="replace W by a unit-variance Gaussian matrix from this seed")
    t.add_argument("--out", type=Path, required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="test l2 reconstruction error of a checkpoint")
    e.add_argument("--model", type=Path, required=True)
    _add_data(e)
    e.add_argument("--m", type=int, default=None)
    e.add_argument("--split", choices=["train", "valid", "test"], default="test")
    e.add_argument("--method", default="UAE")
    e.add_argument("--seed", type=int, default=0, help="key recorded in the results CSV")
    e.add_argument("--eval-seed", type=int, default=0)
    e.add_argument("--out", type=Path, required=True, help="results CSV (rows upserted by method, m, seed)")
    e.add_argument("--pgm", type=Path, default=None, help="originals over reconstructions as a PGM grid")
    e.add_argument("--grid", type=int, default=10)
    e.set_defaults(func=cmd_eval)

    la = sub.add_parser("lasso", help="random Gaussian sensing with ISTA recovery, lambda tuned on valid")
    _add_data(la)
    la.add_argument("--m", type=int, required=True)
    la.add_argument("--sigma", type=float, default=0.1)
    la.add_argument("--lambdas", default=",".join(str(v) for v in LAMBDA_GRID))
    la.add_argument("--max-iters", type=int, default=5000)
    la.add_argument("--tol", type=float, default=1e-7)
    la.add_argument("--max-valid", type=int, default=None)
    la.add_argument("--max-test", type=int, default=None)
    la.add_argument("--method", default="LASSO")
    la.add_argument("--seed", type=int, default=0)
    la.add_argument("--eval-seed", type=int, default=0)
    la.add_argument("--out", type=Path, required=True)
    la.set_defaults(func=cmd_lasso)

    pc = sub.add_parser("pca", help="PCA subspace, pairwise-scatter check and kNN probe")
    _add_data(pc, labels=True)
    pc.add_argument("--m", type=int, required=True)
    pc.add_argument("--k", type=int, default=3)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", type=Path, required=True)
    pc.set_defaults(func=cmd_pca)

    s = sub.add_parser("sample", help="Gibbs chain samples from a trained model")
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--data", type=Path, default=None, help="take x0 from this IDX file's train split")
    s.add_argument("--splits", default="0.7,0.15,0.15")
    s.add_argument("--split-counts", default=None)
    s.add_argument("--x0-index", type=int, default=0)
    s.add_argument("--burn-in", type=int, default=1000)
    s.add_argument("--n-samples", type=int, default=100)
    s.add_argument("--thin", type=int, default=10)
    s.add_argument("--decoder-std", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pgm", action="store_true")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_sample)

    tr = sub.add_parser("transfer", help="UAE-SE / UAE-SD transfer to a target dataset")
    tr.add_argument("--source", type=Path, required=True)
    _add_data(tr)
    tr.add_argument("--mode", choices=["SE", "SD", "se", "sd"], required=True)
    _add_training(tr)
    tr.add_argument("--out", type=Path, required=True)
    tr.set_defaults(func=cmd_transfer)

    d = sub.add_parser("dimreduce", help="export projections and kNN accuracy vs PCA")
    d.add_argument("--model", type=Path, required=True)
    _add_data(d, labels=True)
    d.add_argument("--k", type=int, default=3)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", type=Path, required=True)
    d.set_defaults(func=cmd_dimreduce)

    g = sub.add_parser("gradcheck", help="backprop vs central differences on random architectures")
    g.add_argument("--n-archs", type=int, default=5)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    set_threads(os.environ.get("UAE_THREADS"))
    log.debug("kernel backend: %s", kernels.ACTIVE)
    try:
        return args.func(args)
    except (UaeError, OSError) as exc:
        print(f"uae {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
