# -*- coding: utf-8 -*-
"""
This module defines the console View of the toolbox.

The controller never prints directly; it hands results to a ConsoleView,
which formats them as plain text tables on stdout and sends error messages
to stderr. Tests pass their own streams to capture the output.
"""
import sys

import mpmath

from .certreal import CertReal


def _fmt(value, digits=6):
    """Short decimal form of a CertReal, mpf, float or None."""
    if value is None:
        return "-"
    if isinstance(value, CertReal):
        # Stage quantities run far below the float range.
        value = value.mid if value.is_finite() else value.hi
    try:
        return mpmath.nstr(mpmath.mpf(value), digits)
    except (TypeError, ValueError):
        return str(value)


class ConsoleView:
    """
    Plain-text presentation of stages, certificates and reports.

    Attributes:
        out: Stream for normal output (stdout by default).
        err: Stream for error messages (stderr by default).
        verbose (bool): Print every certificate instead of a summary line.
    """

    def __init__(self, out=None, err=None, verbose=False):
        self.out = out or sys.stdout
        self.err = err or sys.stderr
        self.verbose = verbose

    def update_status(self, message):
        print(message, file=self.out)

    def show_error(self, message):
        print(f"Error: {message}", file=self.err)

    def show_certificates(self, N, certificates):
        """One line per certificate: label, status and margin."""
        for c in certificates:
            print(
                f"  [{N}] {c.label:<24} {c.status:<11} "
                f"lhs<={_fmt(c.lhs_upper)}  rhs>={_fmt(c.rhs_lower)}  margin={_fmt(c.margin)}",
                file=self.out,
            )

    def show_stage(self, record):
        """Summary of a committed stage."""
        failures = record.failures()
        verdict = "PASS" if not failures else f"FAIL ({len(failures)})"
        target = "-" if record.schedule_target is None else record.schedule_target
        print(
            f"Stage {record.N}: l={target} mu={_fmt(record.mu_new)} c={_fmt(record.c_new)} "
            f"A={_fmt(record.basis_const)} bits={record.precision_bits} "
            f"certificates={len(record.certificates)} {verdict}",
            file=self.out,
        )
        if self.verbose or failures:
            self.show_certificates(record.N, record.certificates if self.verbose else failures)

    def show_verification(self, report):
        for stage in report.stages:
            if stage.error is not None:
                print(f"Stage {stage.N}: ERROR {stage.error}", file=self.out)
                continue
            verdict = "PASS" if stage.passed else "FAIL"
            print(
                f"Stage {stage.N}: {len(stage.certificates)} certificates recomputed, {verdict}",
                file=self.out,
            )
            self.show_certificates(stage.N, stage.certificates)
            if stage.cached_mismatches:
                print(
                    f"  [{stage.N}] {stage.cached_mismatches} cached verdicts differ from the replay",
                    file=self.out,
                )
        print("verify: " + ("PASS" if report.passed else "FAIL"), file=self.out)

    def show_spectral(self, N, report):
        print(f"Operator at stage {N}:", file=self.out)
        print(f"  max |eig(T) - Lambda_j|      {_fmt(report.max_eigen_error)}", file=self.out)
        print(f"  max eigenvector residual     {_fmt(report.max_residual)}", file=self.out)
        print(f"  max | |eig| - 1 |            {_fmt(report.max_unimodular_defect)}", file=self.out)
        print(f"  ||U*U - I||_max              {_fmt(report.unitarity_defect)}", file=self.out)
        print(f"  sigma_2 / sigma_1 of T - U   {_fmt(report.rank_one_ratio)}", file=self.out)
        print(f"  eig(U) vs tau_n              {_fmt(report.clark_eigen_error)}", file=self.out)
        print("  spectral check: " + ("PASS" if report.passed else "FAIL " + ", ".join(report.failures)), file=self.out)

    def show_gap(self, cert):
        print(
            f"Limit gap: j={cert.j} k={cert.k} bound={_fmt(cert.bound, 8)} "
            f"< epsilon={_fmt(cert.epsilon)} {'PASS' if cert.passed else 'FAIL'}",
            file=self.out,
        )

    def show_audit(self, audit):
        """Structural, completeness, basis-constant and checklist results."""
        s = audit["structural"]
        print(
            "Structural: (a) {} (b) {} (c) {}".format(
                *("PASS" if s[k]["passed"] else "FAIL" for k in ("a", "b", "c"))
            ),
            file=self.out,
        )
        for c in audit["completeness"]:
            print(
                f"Completeness N={c['N']} m={c['m']}: residual {_fmt(c['residual'])} "
                f"< {_fmt(c['threshold'])} {'PASS' if c['passed'] else 'FAIL'}",
                file=self.out,
            )
        for b in audit["basis_constant"]:
            print(
                f"A_N audit N={b['N']}: max ratio {_fmt(b['max_ratio'])} <= A_N {_fmt(b['basis_const'])} "
                f"({b['samples']} samples) {'PASS' if b['passed'] else 'FAIL'}",
                file=self.out,
            )
        checklist = audit.get("checklist")
        if checklist is not None:
            print(
                "Checklist: (i) {} (ii) {} (iii) {}".format(
                    "PASS" if checklist["i"]["passed"] else "FAIL",
                    "PASS" if checklist["ii"]["passed"] else "FAIL",
                    "vacuous" if checklist["iii"]["vacuous"] else "table",
                ),
                file=self.out,
            )
            print(f"  {checklist['note']}", file=self.out)
