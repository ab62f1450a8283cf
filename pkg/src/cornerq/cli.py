"""Command-line front end.

Subcommands: ``table1`` (operator-table cross-validation), ``build``
(construct a solution from boundary-data expressions), ``verify``
(residual suite + corner checks for a stored solution), ``act`` (apply a
conformal transformation), ``gauss-bonnet`` (topology accounting) and
``sample`` (CSV field dump for external plotting).

Exit codes: 0 success, 1 verification failure, 2 usage/IO error,
3 corner-constraint violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import conformal, construct, verify
from .biharmonic import verify_table
from .expressions import ParseError
from .fields import FDScheme, apply_p4, apply_p3m, apply_p3n, apply_p2, scheme_for
from .geometry import Points

PI = math.pi
HALF_PI = 0.5 * math.pi

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_CONSTRAINT = 3


@dataclass
class Config:
    """Runtime configuration; JSON-serializable and overridable per flag."""

    n_terms: int = construct.DEFAULT_N_TERMS
    corner_delta: float = 0.05
    fd_h: float | None = None
    threads: int | None = None
    tolerances: dict = dataclass_field(default_factory=lambda: {
        "interior": 5e-3, "face_M": 5e-3, "face_N": 5e-3, "corner": 5e-3})

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            raw = json.load(fh)
        cfg = cls()
        for key in ("n_terms", "corner_delta", "fd_h", "threads"):
            if key in raw:
                setattr(cfg, key, raw[key])
        if "tolerances" in raw:
            cfg.tolerances.update(raw["tolerances"])
        return cfg

    def resolve_threads(self):
        env = os.environ.get("CORNERQ_THREADS")
        if env:
            return max(1, int(env))
        if self.threads:
            return max(1, int(self.threads))
        return os.cpu_count() or 1

    def verify_config(self, delta=None):
        scheme = None
        if self.fd_h is not None or delta is not None:
            base = FDScheme()
            scheme = FDScheme(h=self.fd_h or base.h,
                              corner_delta=delta if delta is not None else self.corner_delta)
        return verify.VerifyConfig(scheme=scheme, tolerances=dict(self.tolerances))


def _json_out(payload, path=None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_table1(args, config):
    report = verify_table(args.kmax, fd=True,
                          phi_grid=np.linspace(0.1, 1.47, 9),
                          rho_grid=np.linspace(0.1, 0.9, 7))
    payload = {
        "k_max": report.k_max,
        "sup_analytic": report.sup_analytic,
        "sup_fd_relative": report.sup_fd,
        "tolerance_analytic": report.tol_analytic,
        "tolerance_fd_relative": report.tol_fd,
        "failures": [list(f) for f in report.failures],
        "passed": report.passed,
    }
    _json_out(payload, args.out)
    print(f"operator table k <= {args.kmax}: "
          f"analytic sup {report.sup_analytic:.3e}, fd sup {report.sup_fd:.3e} "
          f"-> {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def cmd_build(args, config):
    try:
        data = construct.BoundaryData.from_sources(args.psi, args.phi_n)
    except ParseError as exc:
        print(f"expression error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        solution = construct.build_solution(data, n_terms=args.terms or config.n_terms)
    except construct.ConstraintError as exc:
        print(f"constraint violation: {exc}", file=sys.stderr)
        print(f"measured corner scalars: round-face {exc.residual_m}, "
              f"flat-face {exc.residual_n}", file=sys.stderr)
        return EXIT_CONSTRAINT
    with open(args.out, "w") as fh:
        fh.write(solution.to_json() + "\n")
    print(f"solution written to {args.out}")
    for key in ("constraint_residual_m", "constraint_residual_n",
                "mu_m_sup_residual", "mu_n_sup_residual",
                "tail_mass_ratio_v1", "tail_mass_ratio_v2"):
        print(f"  {key}: {solution.tolerances[key]:.3e}")
    return EXIT_OK


def _load_solution(path):
    try:
        with open(path) as fh:
            return construct.Solution.from_json(fh.read())
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read solution file {path}: {exc}", file=sys.stderr)
        return None


def cmd_verify(args, config):
    solution = _load_solution(args.file)
    if solution is None:
        return EXIT_USAGE
    omega = solution.field()
    vconf = config.verify_config(delta=args.delta)
    report = verify.residual_report(omega, vconf)
    gb = verify.gauss_bonnet(omega)
    cc = construct.check_corner_constraints(omega)
    hres1, hres2 = verify.corner_h_compatibility(omega)

    corner_ok = max(abs(cc[0] - PI / 4), abs(cc[1] - PI / 4)) < 1e-3
    gb_ok = abs(gb.defect) < 1e-3 * verify.GAUSS_BONNET_TOTAL
    all_ok = report.passed and corner_ok and gb_ok

    payload = {
        "residuals": json.loads(report.to_json()),
        "gauss_bonnet": gb.to_dict(),
        "corner_constraints": {"nu_mu_M": cc[0], "nu_mu_N_minus_mu_N": cc[1],
                               "target": PI / 4, "passed": corner_ok},
        "mean_curvature_compatibility": {
            "face_M_residual_sup": float(np.max(np.abs(hres1))),
            "face_N_residual_sup": float(np.max(np.abs(hres2)))},
        "passed": all_ok,
    }
    _json_out(payload, args.out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report.to_csv())
    for e in report.entries:
        print(f"  {e.condition:9s} sup={e.sup:.3e}  tol={e.tolerance:.1e}  "
              f"{'ok' if e.passed else 'FAIL'}")
    print(f"  gauss-bonnet defect {gb.defect:+.3e}  "
          f"corner constraints ({cc[0]:.6f}, {cc[1]:.6f})")
    print("PASS" if all_ok else "FAIL")
    return EXIT_OK if all_ok else EXIT_VERIFY_FAILED


def _parse_transform(args):
    if args.lambda_:
        return conformal.inversion_element()
    if args.boost:
        axis, _, amount = args.boost.partition(":")
        rapidity = float(amount)
        if abs(rapidity) > 2.0:
            raise ValueError("rapidity beyond 2 leaves the validated accuracy envelope")
        return conformal.boost(axis, rapidity)
    if args.rotate:
        plane, _, amount = args.rotate.partition(":")
        return conformal.rotation(plane, float(amount))
    raise ValueError("one of --boost, --rotate, --lambda is required")


def cmd_act(args, config):
    solution = _load_solution(args.file)
    if solution is None:
        return EXIT_USAGE
    try:
        element = _parse_transform(args)
    except (ValueError, KeyError) as exc:
        print(f"bad transform: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = solution.transformed(element)
    with open(args.out, "w") as fh:
        fh.write(out.to_json() + "\n")
    print(f"transformed solution written to {args.out} "
          f"({len(out.transforms)} transform(s) recorded)")
    return EXIT_OK


def cmd_gauss_bonnet(args, config):
    solution = _load_solution(args.file)
    if solution is None:
        return EXIT_USAGE
    omega = solution.field()
    gb = verify.gauss_bonnet(omega)
    _json_out(gb.to_dict(), args.out)
    ok = abs(gb.defect) < 1e-3 * verify.GAUSS_BONNET_TOTAL
    print(f"interior {gb.interior:+.6e}  faces {gb.faces:+.6e}  "
          f"corner {gb.corner:.6f}  total-target {gb.defect:+.3e}  "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def _parse_slice(spec):
    out = {"alpha": HALF_PI, "theta": 0.0}
    if not spec:
        return out
    for part in spec.split(","):
        key, _, val = part.partition("=")
        key = key.strip()
        if key not in out or not val:
            raise ValueError(f"bad slice component {part!r}")
        out[key] = float(val)
    return out


def cmd_sample(args, config):
    solution = _load_solution(args.file)
    if solution is None:
        return EXIT_USAGE
    try:
        nr, _, np_ = args.grid.partition("x")
        n_rho, n_phi = int(nr), int(np_)
        sl = _parse_slice(args.slice)
    except ValueError as exc:
        print(f"bad grid/slice: {exc}", file=sys.stderr)
        return EXIT_USAGE
    omega = solution.field()
    scheme = scheme_for(omega)
    delta = scheme.corner_delta

    rhos = np.linspace(0.0, 1.0, n_rho)
    phis = np.linspace(0.0, HALF_PI, n_phi)
    R, P = np.meshgrid(rhos, phis, indexing="ij")
    pts = Points.from_spherical(R.ravel(), P.ravel(),
                                np.full(R.size, sl["alpha"]), np.full(R.size, sl["theta"]))
    om = omega.eval(pts)
    n = len(pts)
    q = np.full(n, np.nan)
    t = np.full(n, np.nan)
    u = np.full(n, np.nan)

    margin = (4.2 if scheme.richardson else 2.1) * scheme.h4
    interior = (pts.rho < 1.0 - margin) & (pts.w > margin) & (pts.rho > 1e-3)
    if np.any(interior):
        sub = Points.from_spherical(*(c[interior] for c in pts.sph))
        q[interior] = np.exp(-4.0 * om[interior]) * apply_p4(omega, sub, scheme)

    on_m = (np.abs(pts.rho - 1.0) < 1e-12) & (pts.phi > delta) & (pts.phi < HALF_PI - delta)
    if np.any(on_m):
        sub = Points.from_spherical(*(c[on_m] for c in pts.sph))
        t[on_m] = np.exp(-3.0 * om[on_m]) * (verify.FLAT.T_M + apply_p3m(omega, sub, scheme))
    on_n = (np.abs(pts.phi - HALF_PI) < 1e-12) & (pts.rho < 1.0 - delta) & (pts.rho > 0.05)
    if np.any(on_n):
        sub = Points.from_spherical(*(c[on_n] for c in pts.sph))
        t[on_n] = np.exp(-3.0 * om[on_n]) * apply_p3n(omega, sub, scheme)

    corner = (np.abs(pts.rho - 1.0) < 1e-12) & (np.abs(pts.phi - HALF_PI) < 1e-12)
    if np.any(corner):
        sub = Points.from_spherical(*(c[corner] for c in pts.sph))
        u[corner] = np.exp(-2.0 * om[corner]) * (verify.FLAT.U + apply_p2(omega, sub, scheme))

    def fmt(x):
        return "" if not np.isfinite(x) else f"{x:.17g}"

    lines = ["rho,phi,alpha,theta,omega,Qtilde,Ttilde,Utilde"]
    for i in range(n):
        lines.append(f"{pts.rho[i]:.17g},{pts.phi[i]:.17g},{pts.alpha[i]:.17g},"
                     f"{pts.theta[i]:.17g},{om[i]:.17g},{fmt(q[i])},{fmt(t[i])},{fmt(u[i])}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {n} samples to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cornerq",
        description="Solve and verify the fourth-order corner boundary value "
                    "problem for conformal factors on the half-ball.")
    parser.add_argument("--config", help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("table1", help="cross-validate the boundary-operator table")
    p.add_argument("--kmax", type=int, default=20)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(fn=cmd_table1)

    p = sub.add_parser("build", help="construct a solution from boundary data")
    p.add_argument("--psi", required=True, help="expression in phi (round face)")
    p.add_argument("--phi-n", dest="phi_n", required=True, help="expression in r (flat face)")
    p.add_argument("--terms", type=int, help="seed truncation level")
    p.add_argument("--out", required=True, help="solution JSON path")
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("verify", help="residual suite for a stored solution")
    p.add_argument("file")
    p.add_argument("--delta", type=float, help="corner-exclusion band")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--csv", help="per-node residual CSV path")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("act", help="apply a conformal transformation")
    p.add_argument("file")
    p.add_argument("--boost", help="axis:rapidity, e.g. z:0.5")
    p.add_argument("--rotate", help="plane:angle, e.g. xy:0.3")
    p.add_argument("--lambda", dest="lambda_", action="store_true",
                   help="the face-swapping inversion")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_act)

    p = sub.add_parser("gauss-bonnet", help="topology accounting for a solution")
    p.add_argument("file")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(fn=cmd_gauss_bonnet)

    p = sub.add_parser("sample", help="CSV dump of omega and curvatures")
    p.add_argument("file")
    p.add_argument("--grid", default="50x50", help="RxP grid in (rho, phi)")
    p.add_argument("--slice", default="", help="alpha=A,theta=T")
    p.add_argument("--out", help="CSV path")
    p.set_defaults(fn=cmd_sample)
    return parser


_VALUE_FLAGS = {"--psi", "--phi-n", "--boost", "--rotate", "--slice", "--grid",
                "--out", "--csv", "--config", "--delta", "--terms", "--kmax"}


def _join_dash_values(argv):
    """Fold ``--flag -value`` into ``--flag=-value`` so expressions like
    ``--phi-n -pi/4`` survive argument parsing."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(a + "=" + argv[i + 1])
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None):
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(_join_dash_values(list(argv)))
    try:
        config = Config.load(args.config) if args.config else Config()
    except (OSError, ValueError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return args.fn(args, config)


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
