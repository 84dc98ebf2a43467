"""Command-line front end.

Kernel specs and reports are JSON; curves are CSV and coupled traces TSV.
Every run is a pure function of the kernel spec file and flags, so identical
``--seed`` values give byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import contraction, coupling, estimators, metrics, structure
from .errors import DegenerateCurve, DegenerateVariance, FiniteMCError, NoOverlap, ValidationError
from .kernel import Dist, Kernel, StateSpace, stationary

INGEST_TOL = 1e-9

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_ERGODIC = 3


class SpecError(ValidationError):
    pass


@dataclass
class KernelSpec:
    states: list
    matrix: list
    distance: Optional[list] = None
    drift: Optional[dict] = None
    small_set: Optional[list] = None
    functions: dict = field(default_factory=dict)
    distributions: dict = field(default_factory=dict)

    FIELDS = ("states", "matrix", "distance", "drift", "small_set", "functions", "distributions")

    @classmethod
    def from_json(cls, obj) -> "KernelSpec":
        if not isinstance(obj, dict):
            raise SpecError("spec must be a JSON object")
        unknown = sorted(set(obj) - set(cls.FIELDS))
        if unknown:
            raise SpecError(f"unknown field {unknown[0]!r}")
        for name in ("states", "matrix"):
            if name not in obj:
                raise SpecError(f"missing required field {name!r}")
        spec = cls(
            states=obj["states"],
            matrix=obj["matrix"],
            distance=obj.get("distance"),
            drift=obj.get("drift"),
            small_set=obj.get("small_set"),
            functions=obj.get("functions") or {},
            distributions=obj.get("distributions") or {},
        )
        spec.validate()
        return spec

    def to_json(self) -> dict:
        out = {"states": list(self.states), "matrix": [list(r) for r in self.matrix]}
        if self.distance is not None:
            out["distance"] = [list(r) for r in self.distance]
        if self.drift is not None:
            out["drift"] = {"V": list(self.drift["V"]), "C": list(self.drift["C"])}
        if self.small_set is not None:
            out["small_set"] = list(self.small_set)
        if self.functions:
            out["functions"] = {k: list(v) for k, v in self.functions.items()}
        if self.distributions:
            out["distributions"] = {k: list(v) for k, v in self.distributions.items()}
        return out

    def _vector(self, name, v):
        n = len(self.states)
        if not isinstance(v, list) or len(v) != n:
            raise SpecError(f"{name} must be a list of {n} numbers")
        for i, x in enumerate(v):
            if not isinstance(x, (int, float)) or isinstance(x, bool) or not math.isfinite(x):
                raise SpecError(f"{name}[{i}] is not a finite number")

    def _labels(self, name, labels):
        if not isinstance(labels, list) or not labels:
            raise SpecError(f"{name} must be a nonempty list of state labels")
        for s in labels:
            if str(s) not in self.states:
                raise SpecError(f"{name} refers to unknown state {s!r}")

    def validate(self):
        states = self.states
        if not isinstance(states, list) or not states:
            raise SpecError("states must be a nonempty list of labels")
        if not all(isinstance(s, str) for s in states):
            raise SpecError("state labels must be strings")
        if len(set(states)) != len(states):
            raise SpecError("state labels must be unique")
        n = len(states)
        if not isinstance(self.matrix, list) or len(self.matrix) != n:
            raise SpecError(f"matrix must have {n} rows")
        for i, row in enumerate(self.matrix):
            self._vector(f"matrix row {i} ({states[i]})", row)
            if any(x < 0 for x in row):
                raise SpecError(f"matrix row {i} ({states[i]}) has a negative entry")
            if abs(sum(row) - 1.0) > INGEST_TOL:
                raise SpecError(f"matrix row {i} ({states[i]}) sums to {sum(row)!r}, not 1")
        if self.distance is not None:
            if not isinstance(self.distance, list) or len(self.distance) != n:
                raise SpecError(f"distance must have {n} rows")
            for i, row in enumerate(self.distance):
                self._vector(f"distance row {i}", row)
            g = np.array(self.distance, dtype=float)
            if not np.array_equal(g, g.T):
                i, j = np.argwhere(g != g.T)[0]
                raise SpecError(f"distance is not symmetric at row {i}, column {j}")
            if np.any(np.diag(g) != 0):
                raise SpecError(f"distance row {int(np.flatnonzero(np.diag(g) != 0)[0])} has a nonzero diagonal")
            off = ~np.eye(n, dtype=bool)
            if np.any(g[off] <= 0):
                i, j = np.argwhere((g <= 0) & off)[0]
                raise SpecError(f"distance row {i}, column {j} must be positive")
        if self.drift is not None:
            if not isinstance(self.drift, dict) or set(self.drift) != {"V", "C"}:
                raise SpecError("drift must be an object with fields 'V' and 'C'")
            self._vector("drift.V", self.drift["V"])
            if any(v < 1 for v in self.drift["V"]):
                raise SpecError("drift.V must be >= 1 everywhere")
            self._labels("drift.C", self.drift["C"])
        if self.small_set is not None:
            self._labels("small_set", self.small_set)
        for kind in ("functions", "distributions"):
            table = getattr(self, kind)
            if not isinstance(table, dict):
                raise SpecError(f"{kind} must be an object of named vectors")
            for name, v in table.items():
                self._vector(f"{kind}.{name}", v)
        for name, v in self.distributions.items():
            if any(x < 0 for x in v) or abs(sum(v) - 1.0) > INGEST_TOL:
                raise SpecError(f"distributions.{name} is not a probability vector")

    @property
    def space(self) -> StateSpace:
        return StateSpace(tuple(self.states))

    def kernel(self) -> Kernel:
        return Kernel(self.space, np.array(self.matrix, dtype=float), tol=INGEST_TOL)

    def distance_fn(self) -> Optional[metrics.DistanceFn]:
        if self.distance is None:
            return None
        return metrics.DistanceFn(self.space, np.array(self.distance, dtype=float))


def load_spec(path) -> KernelSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec is not valid JSON: {exc}") from None
    return KernelSpec.from_json(obj)


def _dumps(obj) -> str:
    # float repr is the shortest string that round-trips exactly.
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def load_schema(name: str) -> dict:
    return json.loads(resources.files("finitemc").joinpath("schemas", f"{name}.schema.json").read_text())


def _labels(space, idx):
    return [space.labels[i] for i in sorted(idx)]


def _ergodicity_json(rep: structure.ErgodicityReport, space) -> dict:
    witness = None
    if rep.witness is not None:
        w = rep.witness
        witness = {}
        if "start" in w:
            witness["start"] = space.labels[w["start"]]
            witness["unreachable"] = _labels(space, w["unreachable"])
        if "classes" in w:
            witness["classes"] = [_labels(space, c) for c in w["classes"]]
        if "periodic_classes" in w:
            witness["periodic_classes"] = [_labels(space, c) for c in w["periodic_classes"]]
    return {
        "irreducible": rep.irreducible,
        "period": rep.period,
        "aperiodic": rep.aperiodic,
        "harris": rep.harris,
        "witness": witness,
    }


def analyze(spec: KernelSpec, max_n: int = 50) -> dict:
    k = spec.kernel()
    space = k.space
    rep = structure.classify(k)
    report = {
        "command": "analyze",
        "states": list(space.labels),
        "ergodicity": _ergodicity_json(rep, space),
        "stationary": None,
        "tv_curve": [],
        "geometric_fit": None,
        "wasserstein_curve": None,
        "ricci": None,
        "minorization": None,
        "drift": None,
        "notes": [],
    }
    g = spec.distance_fn()
    if g is not None and k.n >= 2:
        report["ricci"] = contraction.ricci_lower_bound(k, g)
    if spec.small_set is not None:
        try:
            cert = contraction.verify_minorization(k, spec.small_set, 1)
            report["minorization"] = {
                "small_set": _labels(space, cert.small_set),
                "M": cert.M,
                "eps": cert.eps,
                "nu": cert.nu.p.tolist(),
            }
        except NoOverlap as exc:
            report["notes"].append(f"minorization: {exc}")
    if spec.drift is not None:
        try:
            d = contraction.verify_drift(k, spec.drift["V"], spec.drift["C"])
            report["drift"] = {
                "V": np.asarray(d.V).tolist(),
                "lambda": d.lam,
                "b": d.b,
                "small_set": _labels(space, d.small_set),
                "valid": d.check(k),
            }
        except FiniteMCError as exc:
            report["notes"].append(f"drift: {exc}")
    pi = rep.pi
    if pi is None:
        report["notes"].append("invariant distribution is not unique; convergence sections skipped")
        return report
    report["stationary"] = pi.p.tolist()
    curve = contraction.tv_curve(k, max_n, pi=pi)
    report["tv_curve"] = [[N, v] for N, v in curve]
    try:
        gb = contraction.geometric_fit(curve)
        report["geometric_fit"] = {"b": gb.b, "r": gb.r, "uniform": gb.uniform}
    except DegenerateCurve as exc:
        report["notes"].append(f"geometric_fit: {exc}")
    if g is not None:
        wc = contraction.wasserstein_curve(k, g, max_n, pi=pi)
        report["wasserstein_curve"] = [[N, v] for N, v in wc]
    return report


def _pick_dist(spec: KernelSpec, k: Kernel, name: str) -> Dist:
    if name == "stationary":
        return stationary(k)
    if name.startswith("delta:"):
        return Dist.delta(k.space, name[len("delta:") :])
    if name not in spec.distributions:
        avail = ", ".join(sorted(spec.distributions) + ["stationary", "delta:<state>"])
        raise SpecError(f"unknown distribution {name!r}; available: {avail}")
    return Dist(k.space, np.array(spec.distributions[name], dtype=float), tol=INGEST_TOL)


def estimate(spec: KernelSpec, function: str, iters: int, replicates: int, seed: int, x0=None):
    """Return ``(report, replicate_rows)``."""
    if function not in spec.functions:
        avail = ", ".join(sorted(spec.functions)) or "(none)"
        raise SpecError(f"unknown function {function!r}; available: {avail}")
    if iters < 0:
        raise SpecError("--iters must be nonnegative")
    if 0 < replicates < estimators.MIN_CLT_REPLICATES:
        raise SpecError(f"--replicates must be 0 or at least {estimators.MIN_CLT_REPLICATES}")
    k = spec.kernel()
    f = np.array(spec.functions[function], dtype=float)
    start = x0 if x0 is not None else spec.states[0]
    rho = Dist.delta(k.space, start)
    trace = estimators.sample_chain(k, rho, iters, seed)
    est = {"f_hat": estimators.f_hat(trace, f)}
    try:
        r = estimators.estimator_report(trace, f)
        est.update(
            autocorr=r.autocorr,
            ess=r.ess,
            mcse=r.mcse,
            var_f_hat_est=r.var_f_hat_est,
            variance=r.variance,
        )
    except DegenerateVariance as exc:
        est.update(autocorr=[], ess=None, mcse=None, var_f_hat_est=None, variance=0.0, note=str(exc))
    report = {
        "command": "estimate",
        "function": function,
        "x0": start,
        "iters": iters,
        "seed": seed,
        "estimator": est,
        "clt": None,
    }
    rows = []
    if replicates:
        summary = estimators.clt_replicates(k, rho, f, iters, replicates, seed)
        report["clt"] = {
            "replicates": replicates,
            "target": summary.target,
            "degenerate": summary.degenerate,
            "standardized": {key: _num(v) for key, v in summary.moments.items()},
            "f_hat": {key: _num(v) for key, v in summary.f_hat_moments.items()},
        }
        for i in range(replicates):
            rows.append((i, float(summary.f_hat[i]), float(summary.ess[i]), float(summary.mcse[i])))
    return report, rows


def couple(spec: KernelSpec, x0, y0, iters: int, replicates: int, seed: int, mode: str = "splitting"):
    """Return ``(summary, trace)`` for the coupled chain started at ``(x0, y0)``."""
    k = spec.kernel()
    space = k.space
    for name, s in (("--x0", x0), ("--y0", y0)):
        if s not in space.labels:
            raise SpecError(f"{name} refers to unknown state {s!r}")
    if replicates < coupling.MIN_REPLICATES:
        raise SpecError(f"--replicates must be at least {coupling.MIN_REPLICATES}")
    summary = {"command": "couple", "mode": mode, "x0": x0, "y0": y0, "iters": iters, "replicates": replicates, "seed": seed}
    if mode == "splitting":
        if spec.small_set is None:
            raise SpecError("splitting mode needs a small_set in the kernel spec")
        try:
            cert = contraction.verify_minorization(k, spec.small_set, 1)
        except NoOverlap as exc:
            raise SpecError(f"small_set is not a lag-1 small set: {exc}") from None
        pk = coupling.splitting_kernel(k, coupling.SplittingConfig(cert, seed))
        summary["minorization"] = {"small_set": _labels(space, cert.small_set), "eps": cert.eps, "nu": cert.nu.p.tolist()}
    elif mode == "independent":
        pk = coupling.independent_product(k)
    else:
        raise SpecError(f"unknown coupling mode {mode!r}")
    times = coupling.merge_times(pk, x0, y0, iters, replicates, seed)
    estimate_ = coupling.empirical_tv_bound(pk, x0, y0, iters, replicates, seed)
    px = np.linalg.matrix_power(k.T, iters)
    exact_tv = 0.5 * float(np.abs(px[space.index(x0)] - px[space.index(y0)]).sum())
    summary.update(
        empirical_tv_bound=estimate_,
        standard_error=math.sqrt(estimate_ * (1 - estimate_) / replicates),
        exact_unmerged_mass=coupling.diagonal_complement_mass(pk, x0, y0, iters),
        exact_tv=exact_tv,
        met_fraction=float(np.mean(times >= 0)),
        max_meeting_time=int(times.max()) if np.all(times >= 0) else None,
    )
    trace = coupling.simulate_coupled(pk, x0, y0, iters, seed)
    if mode == "independent":
        trace = coupling.CoupledTrace(trace.pairs, None, seed)
    return summary, trace


def metrics_report(spec: KernelSpec, mu_name: str, nu_name: str) -> dict:
    k = spec.kernel()
    mu, nu = _pick_dist(spec, k, mu_name), _pick_dist(spec, k, nu_name)
    out = {
        "command": "metrics",
        "mu": mu_name,
        "nu": nu_name,
        "tv": metrics.tv(mu, nu),
        "tv_ipm": metrics.ipm(mu, nu, metrics.FunctionClass.bounded_unit()),
        "tv_coupling": metrics.coupling_tv_bound(metrics.maximal_coupling(mu, nu)),
        "w1": None,
        "w1_dual": None,
        "coupling": None,
    }
    g = spec.distance_fn()
    if g is not None:
        w, c = metrics.wasserstein1(mu, nu, g)
        out["w1"] = w
        out["coupling"] = c.gamma.tolist()
        if g.is_metric():
            out["w1_dual"] = metrics.ipm(mu, nu, metrics.FunctionClass.lipschitz(g))
    return out


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("spec", help="kernel spec JSON file")
    common.add_argument("--output", default=".", help="directory for output files")
    common.add_argument("--dump-spec", action="store_true", help="also write the normalized spec as spec.json")

    p = argparse.ArgumentParser(prog="finitemc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="ergodicity, stationary law, convergence curves, certificates")
    a.add_argument("--max-n", type=int, default=50)
    a.add_argument("--require-ergodic", action="store_true")

    e = sub.add_parser("estimate", parents=[common], help="MCMC estimator with ESS, MCSE and CLT replicates")
    e.add_argument("--function", required=True)
    e.add_argument("--iters", type=int, required=True)
    e.add_argument("--replicates", type=int, default=0)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--x0", default=None, help="initial state (default: first state)")

    c = sub.add_parser("couple", parents=[common], help="coupled chains and empirical TV bound")
    c.add_argument("--x0", required=True)
    c.add_argument("--y0", required=True)
    c.add_argument("--iters", type=int, required=True)
    c.add_argument("--replicates", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--mode", choices=["splitting", "independent"], default="splitting")

    m = sub.add_parser("metrics", parents=[common], help="TV and W1 between two named distributions")
    m.add_argument("--mu", required=True)
    m.add_argument("--nu", required=True)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.output)
    try:
        spec = load_spec(args.spec)
        if args.dump_spec:
            _write(out / "spec.json", _dumps(spec.to_json()))
        if args.command == "analyze":
            report = analyze(spec, args.max_n)
            _write(out / "report.json", _dumps(report))
            _write(out / "tv_curve.csv", _csv(["N", "tv"], report["tv_curve"]))
            if report["wasserstein_curve"] is not None:
                _write(out / "wasserstein_curve.csv", _csv(["N", "w1"], report["wasserstein_curve"]))
            erg = report["ergodicity"]
            if args.require_ergodic and not (erg["irreducible"] and erg["aperiodic"]):
                print("kernel is not ergodic (reducible or periodic)", file=sys.stderr)
                return EXIT_NOT_ERGODIC
        elif args.command == "estimate":
            report, rows = estimate(spec, args.function, args.iters, args.replicates, args.seed, args.x0)
            _write(out / "estimate.json", _dumps(report))
            if rows:
                _write(out / "replicates.csv", _csv(["replicate", "f_hat", "ess", "mcse"], rows))
        elif args.command == "couple":
            summary, trace = couple(spec, args.x0, args.y0, args.iters, args.replicates, args.seed, args.mode)
            _write(out / "couple.json", _dumps(summary))
            _write(out / "trace.tsv", trace.to_tsv(spec.states))
        elif args.command == "metrics":
            _write(out / "metrics.json", _dumps(metrics_report(spec, args.mu, args.nu)))
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
