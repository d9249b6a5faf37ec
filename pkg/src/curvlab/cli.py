"""Command-line front-end: exact curvature, KFAC, and the MC Fisher sweep.

Exit codes: 0 success, 2 configuration error (including oversized matrices),
3 numeric contract violation.
"""
import argparse
import csv
import logging
import os
import statistics
import sys

from . import _kernels
from .curvature import (
    CurvatureBlock,
    curvature_block,
    curvature_full,
    ggn_full,
    hessian_full_fd,
    kind_from_name,
    mc_fisher_full,
)
from .errors import ConfigError, ContractViolation, DimensionError, SizeLimitError, UnsupportedLayerError
from .io import resolve_data, write_json, write_pgm
from .kfac import kfac_block, kfac_materialize, kfac_residual, relative_residual
from .losses import LossConfig
from .nn import Linear, load_network
from .tensor_core import as_order, save_matrix_csv

log = logging.getLogger("curvlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--net", required=True, help="network spec (JSON)")
    common.add_argument("--data", default="synthetic:seed=0,n=100", help="CSV path or synthetic:seed=S,n=N")
    common.add_argument("--loss", choices=["mse", "ce"], default="mse")
    common.add_argument("--reduction", choices=["sum", "mean"], default="sum")
    common.add_argument("--flatten", choices=["cvec", "rvec"], default="cvec")
    common.add_argument("--mc-samples", type=int, default=1, metavar="M")
    common.add_argument("--seed", type=int, default=0, help="seed of the MC label streams")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--weight-only", action="store_true", help="exclude biases from the parameter blocks")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="curvlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curvature", parents=[common], help="exact curvature matrix")
    p.add_argument("--kind", choices=["ggn", "fisher-mc", "fisher-emp", "hessian-fd"], default="ggn")
    p.add_argument("--layer", type=int, default=None, help="network layer index (default: all parameters)")
    p.add_argument("--heatmap", action="store_true", help="also write a PGM heatmap")

    p = sub.add_parser("kfac", parents=[common], help="KFAC factors and residuals vs the exact blocks")
    p.add_argument("--kind", choices=["ggn", "fisher-mc", "fisher-emp", "hessian-fd"], default="ggn")
    p.add_argument("--layer", type=int, default=None, help="network layer index (default: every linear layer)")

    p = sub.add_parser("mc-sweep", parents=[common], help="MC Fisher residual to the GGN over sample counts")
    p.add_argument("--m-grid", type=_int_list, default=[10, 100, 1000])
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    return parser


class _Setup:
    def __init__(self, args):
        self.net = load_network(args.net)
        self.cfg = LossConfig(args.loss, args.reduction)
        self.data = resolve_data(args.data, self.net.input_dim, self.net.output_dim, self.cfg)
        self.order = as_order(args.flatten)
        self.include_bias = not args.weight_only
        if args.mc_samples < 1:
            raise ConfigError("--mc-samples must be >= 1")
        os.makedirs(args.out, exist_ok=True)

    def base_meta(self, args):
        return {
            "network": repr(self.net),
            "loss": self.cfg.criterion.value,
            "reduction": self.cfg.reduction.value,
            "reduction_factor": self.cfg.factor(len(self.data), self.net.output_dim),
            "num_data": len(self.data),
            "flatten": self.order.value,
            "include_bias": self.include_bias,
            "data": args.data,
            "backend": _kernels.BACKEND,
        }

    def layout(self):
        """Parameter blocks in forward order, for drawing block boundaries."""
        shapes = dict(zip(self.net.linear_indices, self.net.param_shapes(self.include_bias)))
        out, start = [], 0
        for i in self.net.linear_indices:
            size = shapes[i][0] * shapes[i][1]
            out.append({"layer": i, "start": start, "stop": start + size, "param_shape": list(shapes[i])})
            start += size
        return out


def _check_layer(net, layer):
    if layer is None:
        return
    if not 0 <= layer < len(net.layers):
        raise ConfigError(f"--layer {layer} out of range (network has {len(net.layers)} layers)")
    if not isinstance(net.layers[layer], Linear):
        raise ConfigError(f"--layer {layer} is an activation layer; linear layers are {list(net.linear_indices)}")


def cmd_curvature(args):
    s = _Setup(args)
    _check_layer(s.net, args.layer)
    layout = s.layout()
    if args.kind == "hessian-fd":
        if not s.include_bias:
            raise ConfigError("hessian-fd always covers weights and biases; drop --weight-only")
        block = hessian_full_fd(s.net, s.data, s.cfg, s.order)
        if args.layer is not None:
            start, stop = next((b["start"], b["stop"]) for b in layout if b["layer"] == args.layer)
            block = CurvatureBlock(args.layer, s.order, block.matrix[start:stop, start:stop], block.kind,
                                   block.reduction_factor)
    else:
        kind = kind_from_name(args.kind, args.mc_samples, args.seed)
        if args.layer is None:
            block = curvature_full(kind, s.net, s.data, s.cfg, s.order, s.include_bias)
        else:
            block = curvature_block(kind, s.net, s.data, s.cfg, args.layer, s.order, s.include_bias)
        block.validate()

    save_matrix_csv(os.path.join(args.out, "curvature.csv"), block.matrix)
    meta = s.base_meta(args)
    meta.update(
        kind=args.kind,
        layer=args.layer,
        dim=int(block.matrix.shape[0]),
        blocks=layout if args.layer is None else [b for b in layout if b["layer"] == args.layer],
    )
    if args.kind == "fisher-mc":
        meta.update(seed=args.seed, mc_samples=args.mc_samples)
    if args.kind == "hessian-fd":
        meta["note"] = "finite-difference Hessian; requires smooth activations (use tanh in place of relu)"
    if args.heatmap:
        write_pgm(os.path.join(args.out, "curvature.pgm"), block.matrix)
        meta["heatmap"] = "curvature.pgm"
    write_json(os.path.join(args.out, "curvature.json"), meta)
    log.info("wrote %dx%d %s matrix to %s", *block.matrix.shape, args.kind, args.out)
    return EXIT_OK


def cmd_kfac(args):
    if args.kind == "hessian-fd":
        raise ConfigError("KFAC approximates ggn, fisher-mc or fisher-emp, not hessian-fd")
    s = _Setup(args)
    _check_layer(s.net, args.layer)
    kind = kind_from_name(args.kind, args.mc_samples, args.seed)
    layers = s.net.linear_indices if args.layer is None else [args.layer]
    rows, layer_meta = [], []
    for i in layers:
        block = kfac_block(s.net, s.data, s.cfg, i, kind, s.order, s.include_bias)
        exact = curvature_block(kind, s.net, s.data, s.cfg, i, s.order, s.include_bias).validate()
        mat = kfac_materialize(block)
        CurvatureBlock(i, s.order, mat, "kfac").validate()
        save_matrix_csv(os.path.join(args.out, f"A_{i}.csv"), block.A)
        save_matrix_csv(os.path.join(args.out, f"B_{i}.csv"), block.B)
        write_pgm(os.path.join(args.out, f"kfac_{i}.pgm"), mat)
        write_pgm(os.path.join(args.out, f"exact_{i}.pgm"), exact.matrix)
        rows.append(
            [i, args.kind, s.order.value, mat.shape[0],
             repr(kfac_residual(block, exact, "frobenius")), repr(kfac_residual(block, exact, "spectral"))]
        )
        layer_meta.append({"layer": i, "A": f"A_{i}.csv", "B": f"B_{i}.csv", **block.meta})

    with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "kind", "flatten", "dim", "residual_frobenius", "residual_spectral"])
        w.writerows(rows)
    meta = s.base_meta(args)
    meta.update(
        kind=args.kind,
        kronecker_order="A⊗B" if s.order.value == "cvec" else "B⊗A",
        layers=layer_meta,
    )
    if args.kind == "fisher-mc":
        meta.update(seed=args.seed, mc_samples=args.mc_samples)
    write_json(os.path.join(args.out, "kfac.json"), meta)
    return EXIT_OK


def mc_sweep_rows(net, data, cfg, m_grid, seeds, order="cvec", include_bias=True):
    """``(M, seed, spectral, frobenius)`` relative residuals of the exact MC Fisher to the GGN."""
    ggn = ggn_full(net, data, cfg, order, include_bias).matrix
    rows = []
    for m in m_grid:
        for seed in seeds:
            mc = mc_fisher_full(net, data, cfg, order, m, seed, include_bias).matrix
            rows.append(
                (m, seed, relative_residual(mc, ggn, "spectral"), relative_residual(mc, ggn, "frobenius"))
            )
    return rows


def median_by_m(rows, column=2):
    out = {}
    for m in dict.fromkeys(r[0] for r in rows):
        out[m] = statistics.median(r[column] for r in rows if r[0] == m)
    return out


def cmd_mc_sweep(args):
    if not args.m_grid or any(a >= b for a, b in zip(args.m_grid, args.m_grid[1:])) or min(args.m_grid) < 1:
        raise ConfigError("--m-grid must be strictly ascending positive integers")
    if not args.seeds:
        raise ConfigError("--seeds must not be empty")
    s = _Setup(args)
    rows = mc_sweep_rows(s.net, s.data, s.cfg, args.m_grid, args.seeds, s.order, s.include_bias)
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "seed", "spectral_residual", "frobenius_residual"])
        w.writerows([m, seed, repr(sp), repr(fr)] for m, seed, sp, fr in rows)
    spec_med, frob_med = median_by_m(rows, 2), median_by_m(rows, 3)
    with open(os.path.join(args.out, "sweep_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "median_spectral_residual", "median_frobenius_residual"])
        w.writerows([m, repr(spec_med[m]), repr(frob_med[m])] for m in args.m_grid)
    meta = s.base_meta(args)
    meta.update(kind="fisher-mc", reference="ggn", m_grid=args.m_grid, seeds=args.seeds)
    write_json(os.path.join(args.out, "sweep.json"), meta)
    return EXIT_OK


COMMANDS = {"curvature": cmd_curvature, "kfac": cmd_kfac, "mc-sweep": cmd_mc_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UnsupportedLayerError, DimensionError, SizeLimitError) as exc:
        print(f"curvlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolation as exc:
        print(f"curvlab: numeric check failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
