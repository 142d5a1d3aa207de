"""Command-line entry points: align, entropy, oracle."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dpengine, summaries
from .alignment import GapParams, enumerate_paths, gap_penalty
from .dpengine import DpWeights
from .posterior import Hyperparams, ModelState, log_posterior
from .sampler import ChainConfig, build_fragment_library, run_chain
from .structio import (
    parse_fasta,
    parse_pdb_ca,
    write_alignment_tsv,
    write_heatmap_svg,
    write_marginal_csv,
)
from .submodel import (
    DEFAULT_ETA_GRID,
    DEFAULT_PAM_GRID,
    encode_sequence,
    joint_entropy,
    pam_model,
    temper,
    tempered_grid,
)

LOG2 = math.log(2.0)


@dataclass
class RunConfig:
    """Fully resolved align-run configuration; defaults mirror the shipped
    hyperparameter table, lambda = 7.6, and the published run lengths."""

    pdb_x: str
    chain_x: str
    pdb_y: str
    chain_y: str
    fasta_x: str | None = None
    fasta_y: str | None = None
    mode: str = "structure"
    lam: float = 7.6
    iterations: int | None = None
    burn_in: int | None = None
    thin: int = 1
    n_chains: int = 2
    seed: int = 0
    delta: float = 1.0
    global_move_prob: float = 0.1
    pam_grid: tuple[int, ...] = DEFAULT_PAM_GRID
    eta_grid: tuple[float, ...] = DEFAULT_ETA_GRID
    error_model: str = "gaussian"
    cauchy_c: float = 20.0
    cauchy_d0: float = 5.0
    allow_simultaneous: bool = True
    out_dir: str = "."
    hyper: Hyperparams = field(default_factory=Hyperparams)

    def resolved_lengths(self) -> tuple[int, int]:
        if self.mode == "seqstruct":
            return (self.iterations or 130_000, self.burn_in if self.burn_in is not None else 30_000)
        return (self.iterations or 100_000, self.burn_in if self.burn_in is not None else 20_000)


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def write_atomic(path: Path, text: str) -> None:
    """Write via a temp file and rename so partial runs never leave corrupt files."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_int_grid(spec: str) -> tuple[int, ...]:
    try:
        lo, hi, step = (int(v) for v in spec.split(":"))
    except ValueError:
        raise CliError(f"bad grid spec {spec!r}, expected lo:hi:step", code=2) from None
    if step <= 0 or hi < lo:
        raise CliError(f"bad grid spec {spec!r}", code=2)
    return tuple(range(lo, hi + 1, step))


def _parse_float_grid(spec: str) -> tuple[float, ...]:
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise CliError(f"bad grid spec {spec!r}, expected lo:hi:step", code=2) from None
    if step <= 0 or hi < lo:
        raise CliError(f"bad grid spec {spec!r}", code=2)
    count = int(round((hi - lo) / step))
    vals = tuple(round(lo + i * step, 10) for i in range(count + 1))
    return tuple(v for v in vals if v <= hi + 1e-12)


def _parse_error_model(spec: str) -> tuple[str, float, float]:
    if spec == "gaussian":
        return "gaussian", 20.0, 5.0
    if spec.startswith("expcauchy:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise CliError(f"expected expcauchy:c:d0, got {spec!r}", code=2)
        try:
            c, d0 = float(parts[1]), float(parts[2])
        except ValueError:
            raise CliError(f"non-numeric error-model constants in {spec!r}", code=2) from None
        if c <= 0 or d0 <= 0:
            raise CliError("error-model constants must be positive", code=2)
        return "expcauchy", c, d0
    raise CliError(f"unknown error model {spec!r}", code=2)


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"input file not found: {path}", code=2)
    return p.read_text()


def _load_chain(pdb_path: str, chain_id: str, fasta_path: str | None):
    chain = parse_pdb_ca(_read_text(pdb_path), chain_id)
    seq = chain.sequence
    if fasta_path is not None:
        seq = parse_fasta(_read_text(fasta_path))
        if len(seq) != len(chain):
            raise CliError(
                f"FASTA sequence length {len(seq)} != {len(chain)} residues in {pdb_path} chain {chain_id}",
                code=2,
            )
    return chain, seq


def config_from_args(args: argparse.Namespace) -> RunConfig:
    error_model, c, d0 = _parse_error_model(args.error_model)
    pam_grid = _parse_int_grid(args.pam_grid) if args.pam_grid else DEFAULT_PAM_GRID
    eta_grid = _parse_float_grid(args.eta_grid) if args.eta_grid else DEFAULT_ETA_GRID
    if args.fixed_pam is not None:
        pam_grid = (args.fixed_pam,)
    if args.fixed_eta is not None:
        eta_grid = (args.fixed_eta,)
    return RunConfig(
        pdb_x=args.pdb_x,
        chain_x=args.chain_x,
        pdb_y=args.pdb_y,
        chain_y=args.chain_y,
        fasta_x=args.fasta_x,
        fasta_y=args.fasta_y,
        mode=args.mode,
        lam=getattr(args, "lambda"),
        iterations=args.iters,
        burn_in=args.burnin,
        thin=args.thin,
        n_chains=args.chains,
        seed=args.seed,
        delta=args.delta,
        global_move_prob=args.global_move_prob,
        pam_grid=pam_grid,
        eta_grid=eta_grid,
        error_model=error_model,
        cauchy_c=c,
        cauchy_d0=d0,
        allow_simultaneous=not args.no_simultaneous_gaps,
        out_dir=args.out,
        hyper=Hyperparams(error_model=error_model, cauchy_c=c, cauchy_d0=d0),
    )


def _traces_csv(chain_sets: list[summaries.SampleSet]) -> str:
    seq_mode = chain_sets[0].sequence_mode
    cols = ["chain", "record", "nmatch", "sigma2", "open_pen", "ext_pen",
            "alpha", "beta", "gamma", "tx", "ty", "tz", "rmsd", "logpost"]
    if seq_mode:
        cols += ["k", "eta"]
    lines = [",".join(cols)]
    for ci, s in enumerate(chain_sets):
        for i in range(len(s)):
            row = [str(ci), str(i), str(int(s.nmatch[i]))]
            row += [repr(float(v)) for v in (
                s.sigma2[i], s.open_pen[i], s.ext_pen[i],
                s.angles[i, 0], s.angles[i, 1], s.angles[i, 2],
                s.translation[i, 0], s.translation[i, 1], s.translation[i, 2],
                s.rmsd[i], s.logpost[i],
            )]
            if seq_mode:
                row += [str(int(s.k_value[i])), repr(float(s.eta_value[i]))]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _grid_csv(values, labels) -> str:
    lines = [",".join(str(v) for v in labels)]
    lines.append(",".join(f"{v:.9g}" for v in values))
    return "\n".join(lines) + "\n"


def _refine_map(pooled, x, y, ax, ay, cfg: RunConfig, grid):
    """Rerun the max-product traceback at the MAP state's registration and
    keep whichever of the two alignments scores the higher posterior."""
    map_path, map_logpost = summaries.map_alignment(pooled)
    i = int(np.argmax(pooled.logpost))
    gp = GapParams(float(pooled.open_pen[i]), float(pooled.ext_pen[i]))
    state = ModelState(
        map_path, float(pooled.sigma2[i]), gp, cfg.lam,
        allow_simultaneous=cfg.allow_simultaneous,
    )
    state.refresh_registration(x, y)
    tempered = None
    enc_x = enc_y = None
    if pooled.sequence_mode:
        tempered = grid.model(int(pooled.k_index[i]), int(pooled.eta_index[i]))
        enc_x, enc_y = _enc(ax, ay)
    weights = dpengine.build_weights(x, y, state.registration, state, cfg.hyper,
                                     tempered, enc_x, enc_y)
    refined = dpengine.map_traceback(weights)
    best_state = state
    if refined.steps != map_path.steps and refined.n_matched >= 3:
        cand = ModelState(refined, state.sigma2, gp, cfg.lam,
                          allow_simultaneous=cfg.allow_simultaneous)
        cand.refresh_registration(x, y)
        lp_map = log_posterior(x, y, ax, ay, state, cfg.hyper, tempered)
        lp_ref = log_posterior(x, y, ax, ay, cand, cfg.hyper, tempered)
        if lp_ref > lp_map:
            best_state = cand
    return best_state


def _enc(ax, ay):
    return encode_sequence(ax), encode_sequence(ay)


def cmd_align(cfg: RunConfig) -> int:
    x, ax = _load_chain(cfg.pdb_x, cfg.chain_x, cfg.fasta_x)
    y, ay = _load_chain(cfg.pdb_y, cfg.chain_y, cfg.fasta_y)
    iters, burn = cfg.resolved_lengths()
    seq_mode = cfg.mode == "seqstruct"
    grid = tempered_grid(cfg.pam_grid, cfg.eta_grid) if seq_mode else None
    lib = build_fragment_library(x, y, cfg.delta) if cfg.global_move_prob > 0 else None
    chain_seeds = [int(s) for s in np.random.SeedSequence(cfg.seed).generate_state(cfg.n_chains)]
    chain_sets = []
    for seed in chain_seeds:
        ccfg = ChainConfig(
            iterations=iters,
            burn_in=burn,
            seed=seed,
            thin=cfg.thin,
            global_move_prob=cfg.global_move_prob,
            sequence_mode=seq_mode,
            pam_grid=cfg.pam_grid,
            eta_grid=cfg.eta_grid,
            delta=cfg.delta,
            lam=cfg.lam,
            allow_simultaneous=cfg.allow_simultaneous,
        )
        chain_sets.append(run_chain(x, y, ax, ay, ccfg, cfg.hyper, fragment_library=lib, grid=grid))

    out = Path(cfg.out_dir)
    pooled = summaries.concat_samples(chain_sets) if len(chain_sets) > 1 else chain_sets[0]
    marginal = summaries.marginal_matrix(pooled)
    best_state = _refine_map(pooled, x, y, ax, ay, cfg, grid)

    doc = summaries.build_summary(chain_sets)
    doc["map"]["refined_n_matched"] = int(best_state.path.n_matched)
    doc["map"]["refined_rmsd"] = math.sqrt(best_state.dp2 / best_state.path.n_matched)
    doc["config"] = {
        "pdb_x": cfg.pdb_x, "chain_x": cfg.chain_x, "pdb_y": cfg.pdb_y, "chain_y": cfg.chain_y,
        "fasta_x": cfg.fasta_x, "fasta_y": cfg.fasta_y,
        "mode": cfg.mode, "lambda": cfg.lam, "iterations": iters, "burn_in": burn,
        "thin": cfg.thin, "chains": cfg.n_chains, "seed": cfg.seed,
        "chain_seeds": chain_seeds, "delta": cfg.delta,
        "global_move_prob": cfg.global_move_prob,
        "pam_grid": list(cfg.pam_grid), "eta_grid": list(cfg.eta_grid),
        "error_model": cfg.error_model, "cauchy_c": cfg.cauchy_c, "cauchy_d0": cfg.cauchy_d0,
        "allow_simultaneous": cfg.allow_simultaneous,
        "hyperparams": {
            "a_sigma": cfg.hyper.a_sigma, "b_sigma": cfg.hyper.b_sigma,
            "a_open": cfg.hyper.a_open, "b_open": cfg.hyper.b_open,
            "a_ext": cfg.hyper.a_ext, "b_ext": cfg.hyper.b_ext,
        },
    }

    write_atomic(out / "traces.csv", _traces_csv(chain_sets))
    write_atomic(out / "marginal.csv", write_marginal_csv(marginal))
    write_atomic(out / "heatmap.svg", write_heatmap_svg(marginal))
    write_atomic(out / "map_alignment.tsv",
                 write_alignment_tsv(best_state.path, x, y, best_state.registration))
    if seq_mode:
        write_atomic(out / "pam_posterior.csv",
                     _grid_csv(summaries.pam_posterior(pooled), cfg.pam_grid))
        write_atomic(out / "eta_posterior.csv",
                     _grid_csv(summaries.eta_posterior(pooled), cfg.eta_grid))
        joint = summaries.k_eta_joint(pooled)
        lines = ["pam\\eta," + ",".join(str(e) for e in cfg.eta_grid)]
        for ki, k in enumerate(cfg.pam_grid):
            lines.append(str(k) + "," + ",".join(f"{v:.9g}" for v in joint[ki]))
        write_atomic(out / "k_eta_joint.csv", "\n".join(lines) + "\n")
    write_atomic(out / "summary.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_entropy(pam_grid, eta_grid, out_dir: str) -> int:
    """Entropy (bits) of the tempered joint distribution over the (PAM, eta) grid."""
    models = [pam_model(k) for k in pam_grid]
    lines = ["pam\\eta," + ",".join(str(e) for e in eta_grid)]
    for model in models:
        cells = [joint_entropy(temper(model, e)) / LOG2 for e in eta_grid]
        lines.append(str(model.k) + "," + ",".join(f"{v:.9g}" for v in cells))
    write_atomic(Path(out_dir) / "entropy.csv", "\n".join(lines) + "\n")
    return 0


# --- oracle verification suite -------------------------------------------------

def _enumeration_total(paths, match_lw, gp: GapParams) -> float:
    vals = []
    for p in paths:
        w = -gap_penalty(p, gp)
        for i, j in p.matched_pairs():
            w += match_lw[i - 1, j - 1]
        vals.append(w)
    hi = max(vals)
    return hi + math.log(sum(math.exp(v - hi) for v in vals))


def _random_instance(rng, max_size: int):
    n = int(rng.integers(1, max_size + 1))
    m = int(rng.integers(1, max_size + 1))
    match_lw = rng.normal(0.0, 2.0, size=(n, m))
    gp = GapParams(float(rng.uniform(0.1, 5.0)), float(rng.uniform(0.01, 1.0)))
    allow = bool(rng.random() < 0.5)
    return n, m, match_lw, gp, allow


def _weights(match_lw, gp: GapParams, allow: bool, sign_flip: bool) -> DpWeights:
    sgn = -1.0 if sign_flip else 1.0
    return DpWeights(
        match_lw,
        np.zeros(match_lw.shape[0]),
        np.zeros(match_lw.shape[1]),
        open_logweight=sgn * -(gp.open_pen + gp.ext_pen),
        ext_logweight=sgn * -gp.ext_pen,
        allow_simultaneous=allow,
    )


def _check_forward_vs_enumeration(rng, max_size: int, sign_flip: bool):
    worst = 0.0
    for _ in range(50):
        n, m, match_lw, gp, allow = _random_instance(rng, max_size)
        fwd = dpengine.forward_from_weights(_weights(match_lw, gp, allow, sign_flip))
        exact = _enumeration_total(enumerate_paths(n, m, allow), match_lw, gp)
        worst = max(worst, abs(fwd.total - exact) / max(1.0, abs(exact)))
    return worst < 1e-10, f"max rel err {worst:.3e}"


def _check_gap_prior_normalization(rng, max_size: int, sign_flip: bool):
    worst = 0.0
    for _ in range(20):
        n, m, _, gp, allow = _random_instance(rng, max_size)
        if sign_flip:
            log_z = dpengine.forward_from_weights(
                _weights(np.zeros((n, m)), gp, allow, True)).total
        else:
            log_z = dpengine.gap_prior_log_Z(n, m, gp, allow)
        mass = sum(math.exp(-gap_penalty(p, gp) - log_z) for p in enumerate_paths(n, m, allow))
        worst = max(worst, abs(mass - 1.0))
    return worst < 1e-10, f"max |mass - 1| {worst:.3e}"


def _check_proposal_density(rng, max_size: int, sign_flip: bool):
    worst = 0.0
    for _ in range(20):
        n, m, match_lw, gp, allow = _random_instance(rng, max_size)
        fwd = dpengine.forward_from_weights(_weights(match_lw, gp, allow, sign_flip))
        mass = sum(math.exp(dpengine.proposal_log_density(p, fwd)) for p in enumerate_paths(n, m, allow))
        worst = max(worst, abs(mass - 1.0))
    return worst < 1e-10, f"max |mass - 1| {worst:.3e}"


def _check_map_optimality(rng, max_size: int, sign_flip: bool):
    for _ in range(30):
        n, m, match_lw, gp, allow = _random_instance(rng, max_size)
        weights = _weights(match_lw, gp, allow, sign_flip)
        best = dpengine.map_traceback(weights)
        got = dpengine.path_log_weight(best, weights)
        want = max(dpengine.path_log_weight(p, weights) for p in enumerate_paths(n, m, allow))
        if got != want:
            return False, f"map weight {got} != enumerated max {want}"
    return True, "exact on 30 instances"


def _check_traceback_frequencies(rng, max_size: int, sign_flip: bool):
    n = m = min(3, max_size)
    match_lw = rng.normal(0.0, 1.0, size=(n, m))
    gp = GapParams(1.0, 0.2)
    weights = _weights(match_lw, gp, True, sign_flip)
    fwd = dpengine.forward_from_weights(weights)
    paths = enumerate_paths(n, m, True)
    exact = np.array([math.exp(dpengine.proposal_log_density(p, fwd)) for p in paths])
    index = {p.to_string(): k for k, p in enumerate(paths)}
    counts = np.zeros(len(paths))
    draws = 20_000
    for _ in range(draws):
        p, _ = dpengine.sample_traceback(fwd, rng)
        counts[index[p.to_string()]] += 1
    tv = 0.5 * float(np.abs(counts / draws - exact).sum())
    return tv < 0.03, f"TV {tv:.4f} over {draws} draws"


def run_oracle_checks(max_size: int = 5, seed: int = 2024, sign_flip: bool = False):
    rng = np.random.default_rng(seed)
    checks = [
        ("forward_vs_enumeration", _check_forward_vs_enumeration),
        ("gap_prior_normalization", _check_gap_prior_normalization),
        ("proposal_density_normalization", _check_proposal_density),
        ("map_traceback_optimality", _check_map_optimality),
        ("traceback_frequencies", _check_traceback_frequencies),
    ]
    results = []
    for name, fn in checks:
        ok, detail = fn(rng, max_size, sign_flip)
        results.append((name, ok, detail))
    return results


def cmd_oracle(max_size: int, seed: int, sign_flip: bool) -> int:
    if max_size < 1 or max_size > 6:
        print("oracle size guard exceeded: --max-size must be in 1..6", file=sys.stderr)
        return 2
    results = run_oracle_checks(max_size, seed, sign_flip)
    failed = []
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failed.append(name)
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


# --- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesalign",
                                     description="Bayesian pairwise protein structure alignment")
    sub = parser.add_subparsers(dest="command", required=True)

    al = sub.add_parser("align", help="sample the alignment posterior for two structures")
    al.add_argument("--pdb-x", required=True)
    al.add_argument("--chain-x", required=True)
    al.add_argument("--pdb-y", required=True)
    al.add_argument("--chain-y", required=True)
    al.add_argument("--fasta-x", default=None)
    al.add_argument("--fasta-y", default=None)
    al.add_argument("--mode", choices=["structure", "seqstruct"], default="structure")
    al.add_argument("--lambda", type=float, default=7.6)
    al.add_argument("--iters", type=int, default=None)
    al.add_argument("--burnin", type=int, default=None)
    al.add_argument("--thin", type=int, default=1)
    al.add_argument("--chains", type=int, default=2)
    al.add_argument("--seed", type=int, default=0)
    al.add_argument("--delta", type=float, default=1.0)
    al.add_argument("--global-move-prob", type=float, default=0.1)
    al.add_argument("--pam-grid", default=None, metavar="LO:HI:STEP")
    al.add_argument("--eta-grid", default=None, metavar="LO:HI:STEP")
    al.add_argument("--fixed-pam", type=int, default=None)
    al.add_argument("--fixed-eta", type=float, default=None)
    al.add_argument("--error-model", default="gaussian", metavar="gaussian|expcauchy:c:d0")
    al.add_argument("--no-simultaneous-gaps", action="store_true")
    al.add_argument("--out", default=".")

    en = sub.add_parser("entropy", help="entropy table of tempered substitution models")
    en.add_argument("--pam-grid", default=None, metavar="LO:HI:STEP")
    en.add_argument("--eta-grid", default=None, metavar="LO:HI:STEP")
    en.add_argument("--out", default=".")

    orc = sub.add_parser("oracle", help="run the enumeration-oracle verification suite")
    orc.add_argument("--max-size", type=int, default=5)
    orc.add_argument("--seed", type=int, default=2024)
    orc.add_argument("--inject-gap-sign-flip", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "align":
            return cmd_align(config_from_args(args))
        if args.command == "entropy":
            pam_grid = _parse_int_grid(args.pam_grid) if args.pam_grid else DEFAULT_PAM_GRID
            eta_grid = _parse_float_grid(args.eta_grid) if args.eta_grid else DEFAULT_ETA_GRID
            return cmd_entropy(pam_grid, eta_grid, args.out)
        return cmd_oracle(args.max_size, args.seed, args.inject_gap_sign_flip)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
