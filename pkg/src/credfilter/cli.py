"""Command-line front end.

    credfilter simulate --preset table1 --seed 42 --out runs/
    credfilter price --config run.ini
    credfilter price-option --seed 1 --strike 30 --maturity 1
    credfilter hedge --seed 1 --strike 30 --maturity 1 --rebalance 4
    credfilter calibrate --in quotes.csv --out cal/
    credfilter validate --quick

Settings come from an INI file with sections [model], [filter], [sim],
[pricing] and [output]; command-line flags and `--set section.key=value`
override the file.  Exit status: 0 success, 1 failed validation, 2 bad
configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .calibration import (
    CalibrationError,
    GridCache,
    Quote,
    claim_row,
    premium_dates,
    problem_from_quotes,
    quote_residuals,
    read_quotes,
    solve_qp_nonneg,
    write_quotes,
)
from .fullinfo import STOCK, ClaimSpec, FixedPointError, solve_fullinfo
from .galerkin import (
    FilterError,
    FilterState,
    assemble_matrices,
    build_basis,
    default_intensity,
    initial_state,
    survival_probability,
)
from .model import PRESETS, ModelError, ModelParams, law_from_params
from .particles import FilterCollapse
from .pricing import HedgeConfig, MCConfig, OptionSpec, hedge_discrete, price_debt_claim, price_option_mc
from .simulator import chunk_rngs, run_filter_batch, simulate_truth_batch

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_MODEL_KEYS = {f.name: f.type for f in fields(ModelParams)}

DEFAULTS = {
    "filter": {"m": "48", "dt": "0.01", "clip_threshold": "0.001", "spacing": "log",
               "scheme": "milstein"},
    "sim": {"n_paths": "10", "horizon": "5", "record_every": "1", "chunk": "5000"},
    "pricing": {"n_paths": "10000", "claims": "survival:1, survival:5, default:5, stock",
                "nt_per_year": "40", "nt_stock": "200", "nv": "400", "dt": "0.01", "t": "0"},
    "output": {"dir": ".", "prefix": ""},
}


@dataclass
class RunConfig:
    model: ModelParams
    filter: dict
    sim: dict
    pricing: dict
    output: dict
    preset: str = "table1"
    seed: int | None = None
    sources: dict = field(default_factory=dict)  # (section, key) -> "file:line" or "flag"

    def header(self, command: str) -> str:
        lines = [f"credfilter {__version__} {command}", f"seed = {self.seed}", f"preset = {self.preset}",
                 "[model]"]
        lines += [f"{f.name} = {_fmt(getattr(self.model, f.name))}" for f in fields(ModelParams)]
        for sec in ("filter", "sim", "pricing", "output"):
            lines.append(f"[{sec}]")
            # the output directory is left out so results do not depend on where they are written
            lines += [f"{k} = {_fmt(v)}" for k, v in sorted(getattr(self, sec).items())
                      if (sec, k) != ("output", "dir")]
        return "\n".join(lines)

    def need_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required: pass --seed or set [sim] seed")
        return self.seed


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _key_lines(path: str) -> dict:
    """(section, key) -> line number, for diagnostics."""
    out, sec = {}, None
    with open(path) as fh:
        for i, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("[") and line.endswith("]"):
                sec = line[1:-1].strip()
            elif sec and line and line[0] not in "#;" and ("=" in line or ":" in line):
                key = line.split("=", 1)[0] if "=" in line else line.split(":", 1)[0]
                out[(sec, key.strip().lower())] = i
    return out


def _convert(section: str, key: str, text: str, where: str):
    try:
        if section == "model":
            typ = _MODEL_KEYS[key]
            return int(text) if typ in (int, "int") else float(text)
        conv = {
            ("filter", "m"): int, ("filter", "dt"): float, ("filter", "clip_threshold"): float,
            ("sim", "n_paths"): int, ("sim", "horizon"): float, ("sim", "record_every"): int,
            ("sim", "chunk"): int, ("sim", "seed"): int,
            ("pricing", "n_paths"): int, ("pricing", "nt_per_year"): int,
            ("pricing", "nt_stock"): int, ("pricing", "nv"): int, ("pricing", "dt"): float,
            ("pricing", "t"): float,
        }.get((section, key), str)
        return conv(text)
    except ValueError:
        raise ConfigError(f"{where}: [{section}] {key} = {text!r} is not a valid value") from None


def load_config(path: str | None, preset: str | None = None, seed: int | None = None,
                sets=(), overrides: dict | None = None) -> RunConfig:
    """Resolve a RunConfig from defaults, an INI file and command-line overrides."""
    raw = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    raw["model"] = {}
    raw["sim"]["seed"] = None
    where: dict = {}
    file_preset = None
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
        lines = _key_lines(path)
        for sec in cp.sections():
            if sec not in raw:
                raise ConfigError(f"{path}: unknown section [{sec}]; expected one of "
                                  f"{', '.join('[' + s + ']' for s in raw)}")
            for key, val in cp.items(sec):
                loc = f"{path}:{lines.get((sec, key), '?')}"
                if sec == "model" and key == "preset":
                    file_preset = val.strip()
                    continue
                if sec == "model" and key not in _MODEL_KEYS:
                    raise ConfigError(f"{loc}: unknown field [model] {key}")
                if sec != "model" and key not in raw[sec]:
                    raise ConfigError(f"{loc}: unknown field [{sec}] {key}")
                raw[sec][key] = val.strip()
                where[(sec, key)] = loc
    for item in sets:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        lhs, val = item.split("=", 1)
        sec, key = (s.strip().lower() for s in lhs.split(".", 1))
        if sec not in raw or (sec == "model" and key not in _MODEL_KEYS) or (sec != "model" and key not in raw[sec]):
            raise ConfigError(f"--set {item!r}: unknown field [{sec}] {key}")
        raw[sec][key] = val.strip()
        where[(sec, key)] = "--set"
    for (sec, key), val in (overrides or {}).items():
        if val is not None:
            raw[sec][key] = str(val)
            where[(sec, key)] = "command line"
    name = preset or file_preset or "table1"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    conv = {sec: {k: (None if v is None else _convert(sec, k, v, where.get((sec, k), "default")))
                  for k, v in vals.items()} for sec, vals in raw.items()}
    try:
        model = ModelParams(**{**PRESETS[name], **conv["model"]})
    except (ModelError, TypeError) as exc:
        locs = ", ".join(f"{k} ({where[('model', k)]})" for k in conv["model"])
        raise ConfigError(f"invalid [model] block{' from ' + locs if locs else ''}: {exc}") from None
    filt, sim, pricing = conv["filter"], conv["sim"], conv["pricing"]
    if seed is not None:
        sim["seed"] = seed
    checks = [
        (filt["m"] >= 8, ("filter", "m"), "must be at least 8"),
        (filt["dt"] > 0, ("filter", "dt"), "must be positive"),
        (filt["clip_threshold"] > 0, ("filter", "clip_threshold"), "must be positive"),
        (filt["spacing"] in ("log", "uniform"), ("filter", "spacing"), "must be log or uniform"),
        (filt["scheme"] in ("milstein", "euler"), ("filter", "scheme"), "must be milstein or euler"),
        (sim["n_paths"] >= 1, ("sim", "n_paths"), "must be positive"),
        (sim["horizon"] > 0, ("sim", "horizon"), "must be positive"),
        (sim["record_every"] >= 1, ("sim", "record_every"), "must be positive"),
        (sim["chunk"] >= 1, ("sim", "chunk"), "must be positive"),
        (pricing["n_paths"] >= 1, ("pricing", "n_paths"), "must be positive"),
        (pricing["nv"] >= 16, ("pricing", "nv"), "must be at least 16"),
        (pricing["dt"] > 0, ("pricing", "dt"), "must be positive"),
        (pricing["t"] >= 0, ("pricing", "t"), "must be nonnegative"),
    ]
    for ok, (sec, key), msg in checks:
        if not ok:
            raise ConfigError(f"{where.get((sec, key), 'default')}: [{sec}] {key} {msg}")
    ratio = model.div_spacing / filt["dt"]
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise ConfigError(f"{where.get(('filter', 'dt'), 'default')}: [filter] dt = {filt['dt']} "
                          f"does not divide the dividend spacing {model.div_spacing}")
    parse_claims(pricing["claims"])
    return RunConfig(model, filt, sim, pricing, conv["output"], name, sim.pop("seed"), where)


def parse_claims(text: str) -> list:
    """'survival:1, default:5, stock' -> ClaimSpecs."""
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        kind, _, mat = tok.partition(":")
        kind = kind.strip().lower()
        try:
            if kind == STOCK and not mat:
                out.append(ClaimSpec.stock())
            elif kind in ("survival", "default") and mat:
                T = float(mat)
                out.append(ClaimSpec.survival(T) if kind == "survival" else ClaimSpec.default(T))
            else:
                raise ValueError
        except ValueError:
            raise ConfigError(f"[pricing] claims: cannot parse {tok!r}; use survival:T, default:T or stock") from None
    return out


# ---------------------------------------------------------------------------
# Shared setup
# ---------------------------------------------------------------------------

class _Setup:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.params = cfg.model
        self.law = law_from_params(cfg.model)
        p = self.params
        self.basis = build_basis(p.K, p.N, cfg.filter["m"], cfg.filter["spacing"])
        self.mats = assemble_matrices(self.basis, p)
        self.cache = GridCache(p, self.law, nt=5 * cfg.pricing["nt_per_year"], nv=cfg.pricing["nv"])
        self._stock = None

    def grid(self, claim: ClaimSpec):
        if claim.kind == STOCK:
            if self._stock is None:
                self._stock = solve_fullinfo(claim, self.params, self.cfg.pricing["nt_stock"],
                                             self.cfg.pricing["nv"], self.law)
            return self._stock
        return self.cache.get(claim.kind, claim.maturity)

    @property
    def stock(self):
        return self.grid(ClaimSpec.stock()) if self.params.kappa == 1 else None


def _out_path(cfg: RunConfig, name: str) -> str:
    d = cfg.output["dir"]
    os.makedirs(d, exist_ok=True)
    return os.path.join(d, cfg.output["prefix"] + name)


def _write_rows(path: str, header: str, cols, rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args) -> int:
    s = _Setup(cfg)
    seed = cfg.need_seed()
    claims = {c.label: s.grid(c) for c in parse_claims(cfg.pricing["claims"]) if c.kind != STOCK}
    header = cfg.header("simulate")
    sim = cfg.sim
    written = 0
    for rng, P in chunk_rngs(seed, sim["n_paths"], sim["chunk"]):
        tb = simulate_truth_batch(s.params, s.law, sim["horizon"], cfg.filter["dt"], P, rng)
        fb = run_filter_batch(tb, s.mats, s.law, s.stock, claims, record_every=sim["record_every"],
                              clip_threshold=cfg.filter["clip_threshold"], scheme=cfg.filter["scheme"])
        idx = np.round(fb.times / cfg.filter["dt"]).astype(int)
        names = list(claims)
        for p in range(P):
            rows = [[t, tb.V[k, p], int(tb.Y[k, p]), fb.S[r, p], fb.lam[r, p], fb.C[r, p],
                     fb.nuK[r, p], fb.nuN[r, p], *[fb.prices[n][r, p] for n in names]]
                    for r, (t, k) in enumerate(zip(fb.times, idx))]
            _write_rows(_out_path(cfg, f"path_{written:05d}.csv"), header,
                        ["t", "V", "Y", "S", "lambda", "C", "nuK", "nuN", *names], rows)
            written += 1
    print(f"wrote {written} path files to {cfg.output['dir']}")
    return EXIT_OK


def _state_at(s: _Setup, t: float) -> FilterState:
    return initial_state(s.mats, t=t)


def cmd_price(cfg: RunConfig, args) -> int:
    s = _Setup(cfg)
    t = cfg.pricing["t"]
    st = _state_at(s, t)
    rows = []
    for c in parse_claims(cfg.pricing["claims"]):
        if c.kind == STOCK and s.params.kappa != 1:
            raise ConfigError("the stock claim needs kappa = 1")
        g = s.grid(c)
        rows.append([c.label, c.kind, c.maturity, float(price_debt_claim(st, g, s.mats))])
    lam = float(default_intensity(st, s.mats))
    sp = float(survival_probability(st, s.mats))
    path = _out_path(cfg, "prices.csv")
    header = cfg.header("price") + f"\nt = {_fmt(t)}\nlambda = {_fmt(lam)}\nsurvival_probability = {_fmt(sp)}"
    _write_rows(path, header, ["claim", "kind", "maturity", "price"], rows)
    for r in rows:
        print(f"{r[0]:<16} {r[3]:.10f}")
    return EXIT_OK


def _option(s: _Setup, args) -> OptionSpec:
    under = parse_claims(args.underlying)
    if len(under) != 1:
        raise ConfigError("--underlying must name one claim")
    g = s.grid(under[0])
    if args.kind == "call":
        return OptionSpec.call(g, args.strike, args.maturity)
    return OptionSpec.put(g, args.strike, args.maturity)


def cmd_price_option(cfg: RunConfig, args) -> int:
    s = _Setup(cfg)
    seed = cfg.need_seed()
    opt = _option(s, args)
    st = _state_at(s, cfg.pricing["t"])
    mc = MCConfig(s.law, n_paths=cfg.pricing["n_paths"], dt=cfg.pricing["dt"], scheme=cfg.filter["scheme"],
                  measure=args.measure)
    res = price_option_mc(st, opt, mc, s.mats, rng=np.random.default_rng(seed))
    _write_rows(_out_path(cfg, "option_price.csv"), cfg.header("price-option"),
                ["option", "strike", "maturity", "price", "std_error", "nuN_bound"],
                [[opt.name, args.strike, args.maturity, res.price, res.std_error, res.nuN_bound]])
    print(f"{opt.name}: {res.price:.8f} +- {res.std_error:.8f}")
    return EXIT_OK


def cmd_hedge(cfg: RunConfig, args) -> int:
    s = _Setup(cfg)
    seed = cfg.need_seed()
    opt = _option(s, args)
    inst = [s.grid(c) for c in parse_claims(args.instruments)] if args.instruments else []
    dates = np.linspace(0.0, args.maturity, args.rebalance + 1)
    hc = HedgeConfig(s.mats, s.law, n_paths=cfg.pricing["n_paths"], dt=cfg.filter["dt"],
                     scheme=cfg.filter["scheme"], n_oos=args.oos, stock_grid=s.stock,
                     clip_threshold=cfg.filter["clip_threshold"])
    rep = hedge_discrete(opt, inst, dates, hc, np.random.default_rng(seed))
    header = (cfg.header("hedge") + f"\noption = {opt.name}\nprice0 = {_fmt(rep.price0)}"
              f"\nvalue_path_check = {_fmt(rep.value_path_check)}"
              f"\ntotal_residual_risk = {_fmt(rep.total_residual_risk)}")
    rep.to_csv(_out_path(cfg, "hedge.csv"), header=header)
    print(f"{opt.name}: price {rep.price0:.6f}, total residual risk {rep.total_residual_risk:.6g}")
    for msg in rep.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return EXIT_OK


def fixture_quotes(s: _Setup, t: float = 0.0, recovery: float = 0.4) -> list:
    """Round-trip quotes priced from the model's initial density."""
    st = FilterState(t, np.maximum(initial_state(s.mats, t=t).psi, 0.0))
    st = st.replace(psi=st.psi / (s.mats.mass @ st.psi))
    q = []
    for kind, T in (("survival", 1.0), ("survival", 3.0), ("default", 2.0), ("default", 5.0)):
        q.append(Quote(f"{kind}_{T:g}", kind, t + T, float(price_debt_claim(st, s.cache.get(kind, t + T), s.mats))))
    T = t + 5.0
    prot = (1.0 - recovery) * float(claim_row(s.cache.get("default", T), s.basis, t) @ st.psi)
    dates = premium_dates(t, T)
    accr = np.diff(np.concatenate([[t], dates]))
    annuity = sum(a * float(claim_row(s.cache.get("survival", float(d)), s.basis, t) @ st.psi)
                  for d, a in zip(dates, accr))
    q.append(Quote("cds_5", "cds", T, prot / annuity))
    return q


def cmd_calibrate(cfg: RunConfig, args) -> int:
    s = _Setup(cfg)
    t = cfg.pricing["t"]
    if args.write_fixture:
        write_quotes(args.write_fixture, fixture_quotes(s, t, args.recovery), header=cfg.header("calibrate fixture"))
        print(f"wrote round-trip quotes to {args.write_fixture}")
        return EXIT_OK
    if not args.input:
        raise ConfigError("calibrate needs --in quotes.csv (or --write-fixture PATH)")
    try:
        quotes = read_quotes(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read quotes {args.input}: {exc.strerror}") from None
    except CalibrationError as exc:
        raise ConfigError(str(exc)) from None
    prob = problem_from_quotes(quotes, s.basis, t, s.cache, recovery=args.recovery)
    res = solve_qp_nonneg(prob)
    resid = quote_residuals(res.psi, prob)
    header = (cfg.header("calibrate") + f"\ninput = {args.input}\nrecovery = {_fmt(args.recovery)}"
              f"\nobjective = {_fmt(res.objective)}\nkkt_residual = {_fmt(res.kkt_residual)}"
              f"\ncomplementarity = {_fmt(res.complementarity)}\niterations = {res.iterations}")
    _write_rows(_out_path(cfg, "calibration_residuals.csv"), header,
                ["instrument_id", "kind", "maturity", "value", "model_value", "residual"],
                [[q.instrument_id, q.kind, q.maturity, q.value, q.value + r, r]
                 for q, r in zip(quotes, resid[1:])])
    _write_rows(_out_path(cfg, "calibrated_psi.csv"), header, ["index", "psi"],
                [[i + 1, v] for i, v in enumerate(res.psi)])
    grid = np.linspace(s.params.K, s.params.N, 1001)
    dens = s.basis.design(grid) @ res.psi
    _write_rows(_out_path(cfg, "calibrated_density.csv"), header, ["v", "density"], zip(grid, dens))
    print(f"calibrated {len(quotes)} quotes: max residual {np.max(np.abs(resid)):.3e}, "
          f"{int(res.active.sum())} of {prob.m} coefficients at zero")
    return EXIT_OK


def cmd_validate(cfg: RunConfig, args) -> int:
    from .validation import run_suite

    seed = cfg.seed if cfg.seed is not None else 20240601
    results = run_suite(quick=args.quick, seed=seed, only=args.only,
                        report=lambda r: print(r.line(), flush=True))
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} checks passed")
    return EXIT_OK if n_ok == len(results) else EXIT_FAILED


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="credfilter", description="Filtering-based credit pricing toolkit.")
    ap.add_argument("--version", action="version", version=f"credfilter {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [model], [filter], [sim], [pricing], [output]")
    common.add_argument("--preset", help=f"model preset ({', '.join(sorted(PRESETS))})")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config field (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate firm, observations and filter")
    p.add_argument("--n-paths", type=int)
    p.add_argument("--horizon", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("price", parents=[common], help="price debt claims from the filter")
    p.add_argument("--t", type=float, help="pricing time")
    p.set_defaults(func=cmd_price)

    for name, func, helptext in (("price-option", cmd_price_option, "Monte Carlo option price"),
                                 ("hedge", cmd_hedge, "discrete risk-minimizing hedge of an option")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--kind", choices=("call", "put"), default="call")
        p.add_argument("--strike", type=float, required=True)
        p.add_argument("--maturity", type=float, required=True)
        p.add_argument("--underlying", default="stock", help="claim the option is written on")
        p.add_argument("--n-paths", type=int)
        p.set_defaults(func=func)
    sub.choices["price-option"].add_argument("--measure", choices=("guided", "reference"), default="guided")
    sub.choices["hedge"].add_argument("--instruments", default="stock",
                                      help="hedge instruments, comma separated ('' for none)")
    sub.choices["hedge"].add_argument("--rebalance", type=int, default=4, help="number of rebalancing periods")
    sub.choices["hedge"].add_argument("--oos", type=int, default=0, help="out-of-sample paths")

    p = sub.add_parser("calibrate", parents=[common], help="calibrate the filter density to quotes")
    p.add_argument("--in", dest="input", help="quotes CSV (instrument_id,kind,maturity,value)")
    p.add_argument("--recovery", type=float, default=0.4)
    p.add_argument("--write-fixture", metavar="PATH", help="write round-trip quotes and exit")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("validate", parents=[common], help="run the oracle and acceptance checks")
    p.add_argument("--quick", action="store_true", help="only the fast deterministic checks")
    p.add_argument("--only", nargs="*", help="check keys or numbers to run")
    p.set_defaults(func=cmd_validate)
    return ap


def run_command(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    overrides = {("output", "dir"): args.out}
    if args.command == "simulate":
        overrides[("sim", "n_paths")] = args.n_paths
        overrides[("sim", "horizon")] = args.horizon
    if args.command in ("price-option", "hedge"):
        overrides[("pricing", "n_paths")] = args.n_paths
    if args.command == "price":
        overrides[("pricing", "t")] = args.t
    try:
        cfg = load_config(args.config, args.preset, args.seed, args.set, overrides)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FilterError, FixedPointError, FilterCollapse, CalibrationError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"numerical error in {module} ({args.command}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ModelError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> None:
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
