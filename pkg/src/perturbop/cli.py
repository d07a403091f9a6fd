"""Command-line reports for the moment, eigenvalue, profile and bracket computations.

Exit codes: 0 success, 2 a check failed, 1 usage or numeric error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
import time
from fractions import Fraction

import mpmath
import numpy as np
import scipy

from . import __version__
from . import acceptance
from . import bounds as bd
from . import operator_core as oc
from . import stern as st
from . import thue_morse as tm
from .errors import PerturbOpError

SCHEMA = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# commands; each returns (results, csv rows or None, all checks passed)

def cmd_tm_moments(a):
    k = a.k or 1
    n_max = 12 if a.n_max is None else a.n_max
    vals = tm.tm_moments(k, n_max, cap=a.cap or tm.MOMENT_CAP)
    rows = [{"k": k, "n": n, "M": str(m)} for n, m in enumerate(vals)]
    return {"rows": rows}, rows, True


def cmd_tm_rho(a):
    ks = [a.k] if a.k else [1, 2, 3]
    n_max = 14 if a.n_max is None else a.n_max
    rows, ok = [], True
    for k in ks:
        est = tm.rho_estimate(k, n_max, cap=a.cap or tm.MOMENT_CAP)
        pred, slack = tm.rho_predicted(k)
        prior = tm.TMConstants.prior_upper(k)
        agrees = abs(est.estimate - pred) <= est.error_band + slack
        ok = ok and agrees and est.estimate <= prior
        rows.append({"k": k, "n_max": n_max, "estimate": est.estimate, "error_band": est.error_band,
                     "predicted": pred, "slack": slack, "prior_upper": prior, "agrees": agrees})
    return {"rows": rows}, rows, ok


def cmd_tm_constants(a):
    precision = a.precision or 1e-15
    n = 4
    while tm.delta1_certified(n)[1] >= precision / 2:
        n += 1
    d1, d1_tail = tm.delta1_certified(n)
    xi23 = float(tm.xi_eval(2.0 / 3.0))
    lo, hi = tm.xi_interval(7.0 / 8.0, trunc_n=11)
    ok = abs(d1 - 0.6027) <= 5e-4 and abs(d1 - xi23) <= 1e-9 and 0.833 <= lo <= hi <= 0.835
    results = {"delta1": d1, "delta1_tail_bound": d1_tail, "delta1_terms": n,
               "xi_two_thirds": xi23, "xi_seven_eighths_interval": [lo, hi], "eta": tm.ETA_TM}
    rows = [{"name": key, "value": json.dumps(val)} for key, val in results.items()]
    return results, rows, ok


def cmd_stern_moments(a):
    tau = a.k or 1
    n_max = 12 if a.n_max is None else a.n_max
    vals = st.stern_moments(tau, n_max, st.stern_values(n_max, cap=a.cap or st.TABLE_CAP))
    rows = [{"tau": tau, "N": n, "M": str(m)} for n, m in enumerate(vals)]
    return {"rows": rows}, rows, True


def cmd_stern_sigma(a):
    taus = [a.k] if a.k else list(range(1, 9))
    rows, ok = [], True
    for tau in taus:
        sigma, resid = st.sigma_eigen(tau, cap=a.cap or st.SIGMA_CAP)
        pred, slack = st.sigma_predicted(tau)
        prior_lo, prior_hi = st.prior_bounds(tau)
        row = {"tau": tau, "sigma": sigma, "residual": resid, "predicted": pred,
               "slack": slack, "prior_lower": prior_lo, "prior_upper": prior_hi,
               "within_prior": prior_lo <= sigma <= prior_hi}
        if tau <= 6:
            cp = st.charpoly_exact(st.transfer_matrix(tau).entries)
            root = st.sigma_from_charpoly(tau)
            row["charpoly"] = " ".join(str(c) for c in cp)
            row["charpoly_root"] = root
            row["agrees"] = abs(root - sigma) <= 1e-10
            ok = ok and row["agrees"]
            guess = Fraction(round(sigma))
            row["sigma_exact"] = str(guess) if st.poly_eval(cp, guess) == 0 else ""
        rows.append(row)
    return {"rows": rows}, rows, ok


def cmd_stern_identity(a):
    tau_list = [a.k] if a.k else list(range(1, 6))
    n_max = 14 if a.n_max is None else a.n_max
    table = st.stern_values(n_max, cap=a.cap or st.TABLE_CAP)
    rows = []
    for tau in tau_list:
        for N in range(1, n_max + 1):
            chk = st.recurrence_identity_check(tau, N, table)
            rows.append({"tau": tau, "N": N, "moment_difference": str(chk.moment_difference),
                         "half_iterate_at_one": str(chk.half_iterate_at_one), "passed": chk.passed})
    bij_n = min(n_max, 12)
    bijective = {N: st.rewrite_is_bijective(N) for N in range(1, bij_n + 1)}
    ok = all(r["passed"] for r in rows) and all(bijective.values())
    return {"rows": rows, "bijection": {str(k): v for k, v in bijective.items()}}, rows, ok


def _build(a):
    tau = a.k or 8
    if a.system == "tm":
        return tau, tm.build_tm_profile(tau)
    return tau, st.build_stern_profile(tau)


def cmd_profile_verify(a):
    tau, (system, profile) = _build(a)
    rep = bd.verify_hypotheses(system, profile, seed=a.seed)
    d = rep.to_dict()
    d.update(system=a.system, tau=tau, profile=profile.summary())
    rows = [{"condition": c["condition"], "worst_slack": c["worst_slack"], "passed": c["passed"],
             "informational": c["informational"], "witness": json.dumps(c["witness"], sort_keys=True)}
            for c in d["conditions"]]
    return d, rows, rep.passed


def cmd_bracket(a):
    tau, (system, profile) = _build(a)
    r_max = a.r_max or 18
    br = bd.radius_bracket(profile)
    grid = np.linspace(0.125, 1.0, 8) if a.system == "tm" else np.linspace(0.0, 1.0, 9)
    growth = oc.growth_rate(oc.iterate_norms(system, r_max, grid)[1:])
    measured = 1.0 / growth.estimate
    res = {"system": a.system, "tau": tau, "rho_lo": br.rho_lo, "rho_hi": br.rho_hi,
           "kappa0": br.kappa0, "eta": br.eta, "width_constant": br.width_constant,
           "growth_rate": growth.estimate, "growth_error_band": growth.error_band,
           "measured_radius": measured, "inside": br.contains_radius(measured)}
    rows = [{"name": k, "value": v} for k, v in res.items()]
    return res, rows, res["inside"]


def cmd_full_verify(a):
    results = acceptance.run_all(seed=a.seed)
    rows = [{"criterion": r.number, "title": r.title, "passed": r.passed, "seconds": r.seconds,
             "budget": r.budget} for r in results]
    for r in results:
        print(r.line(), file=sys.stderr)
    return {"criteria": [r.to_dict() for r in results]}, rows, all(r.passed for r in results)


COMMANDS = {
    "tm-moments": (cmd_tm_moments, "exact Thue-Morse moments M_k(n)"),
    "tm-rho": (cmd_tm_rho, "growth constants rho_k from exact moments"),
    "tm-constants": (cmd_tm_constants, "delta_1, xi(2/3) and the certified xi(7/8) interval"),
    "stern-moments": (cmd_stern_moments, "exact Stern moments M_tau(N)"),
    "stern-sigma": (cmd_stern_sigma, "Perron eigenvalue sigma_tau of the transfer matrix"),
    "stern-identity": (cmd_stern_identity, "moment/operator identity and the rewrite bijection"),
    "profile-verify": (cmd_profile_verify, "sampled check of a bound profile's hypotheses"),
    "bracket": (cmd_bracket, "radius bracket against the measured growth rate"),
    "full-verify": (cmd_full_verify, "run every acceptance check"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--k", "--tau", dest="k", type=int, help="moment order k or tau")
    common.add_argument("--n-max", "--N-max", dest="n_max", type=int, help="largest n (or N)")
    common.add_argument("--r-max", type=int, help="largest operator iterate")
    common.add_argument("--precision", type=float, help="target absolute precision")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--cap", type=int, help="override the size cap of the command")
    common.add_argument("--out", help="write the report to this file")
    common.add_argument("--system", choices=("tm", "stern"), default="tm",
                        help="application system for profile-verify and bracket")
    parser = _Parser(prog="perturbop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def provenance(a) -> dict:
    return {"package": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__, "seed": a.seed,
            "caps": {"tm_moment": tm.MOMENT_CAP, "stern_table": st.TABLE_CAP,
                     "stern_sigma": st.SIGMA_CAP, "word_sum": oc.WORD_SUM_CAP,
                     "direct": oc.DIRECT_CAP, "override": a.cap}}


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def render(a, results, rows, seconds: float) -> str:
    if a.format == "csv":
        buf = io.StringIO()
        if rows:
            fields = list(dict.fromkeys(k for row in rows for k in row))
            writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        return buf.getvalue()
    params = {k: v for k, v in vars(a).items() if k not in ("command", "format", "out")}
    envelope = {"schema": SCHEMA, "command": a.command, "parameters": params, "results": results,
                "provenance": provenance(a), "timing": {"seconds": seconds}}
    return json.dumps(envelope, sort_keys=True, indent=2, default=_jsonable) + "\n"


def run(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    fn = COMMANDS[a.command][0]
    t0 = time.perf_counter()
    try:
        results, rows, ok = fn(a)
    except (PerturbOpError, ValueError, ArithmeticError) as exc:
        print(f"perturbop {a.command}: {exc}", file=sys.stderr)
        return 1
    text = render(a, results, rows, time.perf_counter() - t0)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 2


def main() -> None:
    sys.exit(run())
