# -*- coding: utf-8 -*-
"""
This module defines the Controller of the toolbox.

The Controller is the logic hub between the command line and the numerical
modules: it builds or loads a ConstructionState (the Model), runs the
construction, certification and operator code on it, writes JSON and CSV
results to disk, and hands everything that should be shown to the View.
"""
import csv
import json
import logging
import os

import mpmath

from .certify import (
    audit_basis_constant,
    completeness_certificate,
    limit_gap,
    structural_checks,
    verify_state,
)
from .certreal import PrecisionContext
from .clark import pairwise_gap
from .construct import extend, start
from .diskop import build_bundle, grivaux_checklist, spectral_check
from .report import ConsoleView
from .serialize import dumps, loads, state_to_document

logger = logging.getLogger(__name__)


def _digits(value, digits=50):
    """Midpoint of an interval as a decimal string for CSV tables."""
    return mpmath.nstr(value.mid, digits)


class Controller:
    """
    Orchestrates construct, verify, operator, gaps and audit runs.

    Attributes:
        view (ConsoleView): Where progress and results are shown.
        force_overwrite (bool): Allow replacing existing output files.
    """

    def __init__(self, view=None, force_overwrite=False):
        self.view = view or ConsoleView()
        self.force_overwrite = force_overwrite

    # ------------------------------------------------------------------ files

    def _check_target(self, path, overwrite=None):
        overwrite = self.force_overwrite if overwrite is None else overwrite
        if os.path.exists(path) and not overwrite:
            raise FileExistsError(
                f"Output file '{path}' already exists. Use --force-overwrite to proceed."
            )

    def save_state(self, state, path, tolerances=None, overwrite=None):
        """
        Writes the state document as indented JSON.

        Args:
            overwrite (bool, optional): Replaces `force_overwrite` for this call.
        """
        self._check_target(path, overwrite)
        # Create the target folder if it doesn't exist yet.
        folder = os.path.dirname(os.path.abspath(path))
        os.makedirs(folder, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(dumps(state_to_document(state, tolerances)))
        self.view.update_status(f"State saved to {path}")

    def load_state(self, path):
        """
        Reads a state document.

        Raises:
            FileNotFoundError: If the file does not exist.
            SchemaError: If the document is malformed.
        """
        if not os.path.exists(path):
            raise FileNotFoundError(f"State file not found at {path}")
        with open(path, "r", encoding="utf-8") as f:
            return loads(f.read())

    def _write_csv(self, path, fieldnames, rows):
        self._check_target(path)
        with open(path, "w", newline="", encoding="utf-8") as f:
            # One header row, then one row per dict.
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            for row in rows:
                writer.writerow(row)

    def _write_json(self, path, data):
        self._check_target(path)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=4)

    def export_tables(self, state, folder):
        """Writes atoms.csv and zeros.csv for a state."""
        os.makedirs(folder, exist_ok=True)
        # Decimal midpoints with 50 digits; the JSON state keeps the exact intervals.
        self._write_csv(
            os.path.join(folder, "atoms.csv"),
            ["n", "t", "mu", "c"],
            (
                {"n": n, "t": _digits(a.t), "mu": _digits(a.mu), "c": _digits(a.c)}
                for n, a in enumerate(state.system.atoms, start=1)
            ),
        )
        self._write_csv(
            os.path.join(folder, "zeros.csv"),
            ["stage", "j", "lambda"],
            (
                {"stage": r.N, "j": j, "lambda": _digits(z.lam)}
                for r in state.records
                for j, z in r.zeros.in_label_order()
            ),
        )

    # --------------------------------------------------------------- commands

    def construct(self, config, tables=False):
        """
        Runs the construction described by `config` and saves the state.

        The state is saved even when a stage fails, so the committed stages
        are not lost; the failure is then re-raised.

        Returns:
            ConstructionState: The committed state.
        """
        # Fail before any work is done if the output would be clobbered.
        self._check_target(config.output)
        state = start(config, on_stage=self.view.show_stage)
        try:
            extend(state, config.stages, config.iteration_cap, on_stage=self.view.show_stage)
        finally:
            # Whatever was committed so far goes to disk, even on failure.
            self.save_state(state, config.output, config.tolerances)
            if tables:
                self.export_tables(state, os.path.dirname(os.path.abspath(config.output)))
        return state

    def extend(self, path, stages, iteration_cap, output=None):
        """Loads a state, constructs further stages and saves it again."""
        state = self.load_state(path)
        output = output or path
        # An in-place extend may always replace its own input.
        in_place = True if output == path else None
        try:
            extend(state, stages, iteration_cap, on_stage=self.view.show_stage)
        finally:
            self.save_state(state, output, overwrite=in_place)
        return state

    def verify(self, path):
        """Replays every certificate of a saved state."""
        state = self.load_state(path)
        report = verify_state(state)
        self.view.show_verification(report)
        return report

    def _certified_records(self, state):
        """The stored records, or replayed ones when certificates were stripped."""
        if all(r.certificates for r in state.records):
            return state.records
        logger.info("Cached certificates missing; replaying the construction.")
        return verify_state(state).records

    def operator(self, path, stage, bits=512, method="closed_form", folder=None):
        """
        Builds the disk operator of a stage and writes its report and tables.

        Files: operator_report.json, clark_points.csv, spectrum.csv,
        singular_values.csv and gaps.csv in `folder`.

        Returns:
            tuple: (DiskOperatorBundle, SpectralReport, checklist dict).
        """
        state = self.load_state(path)
        # Raises IndexError for a stage the file does not hold.
        record = state.record(stage)
        system = state.system_at(stage)
        # Never work below the precision the stage was committed at.
        ctx = PrecisionContext(
            bits=max(bits, record.precision_bits),
            max_bits=max(bits, record.precision_bits, state.ctx.max_bits),
        )
        # Assemble T and U, then compare their spectra with the Cayley images of the zeros.
        bundle = build_bundle(system, record.zeros, ctx, method)
        report = spectral_check(bundle, state.meta.get("tolerances"))
        checklist = grivaux_checklist(system, record.zeros, bundle)
        structural = structural_checks(system)
        self.view.show_spectral(stage, report)

        # Default: operator_stage<N> next to the state file.
        folder = folder or os.path.join(os.path.dirname(os.path.abspath(path)), f"operator_stage{stage}")
        os.makedirs(folder, exist_ok=True)
        self._write_json(
            os.path.join(folder, "operator_report.json"),
            {
                "stage": stage,
                "bits": ctx.bits,
                "method": method,
                "beta": bundle.beta.to_record(),
                "spectral": report.to_dict(),
                "checklist": checklist,
                "structural": structural,
                # Matrices as [re, im] pairs of floats for plotting.
                "T_matrix": [[[float(x.re), float(x.im)] for x in row] for row in bundle.T_matrix],
                "U_matrix": [[[float(x.re), float(x.im)] for x in row] for row in bundle.U_matrix],
            },
        )
        self._write_csv(
            os.path.join(folder, "clark_points.csv"),
            ["n", "re_tau", "im_tau", "sigma"],
            (
                {"n": n, "re_tau": _digits(t.re), "im_tau": _digits(t.im), "sigma": _digits(s)}
                for n, (t, s) in enumerate(zip(bundle.tau, bundle.sigma), start=1)
            ),
        )
        self._write_csv(
            os.path.join(folder, "spectrum.csv"),
            ["j", "re_Lambda", "im_Lambda", "residual"],
            (
                {
                    "j": j,
                    "re_Lambda": _digits(L.re),
                    "im_Lambda": _digits(L.im),
                    "residual": r["residual"],
                }
                for j, (L, r) in enumerate(zip(bundle.Lambda, report.residuals), start=1)
            ),
        )
        self._write_csv(
            os.path.join(folder, "singular_values.csv"),
            ["index", "value"],
            ({"index": i, "value": v} for i, v in enumerate(report.singular_values, start=1)),
        )
        # Upper ends of ||f_j - f_k|| for every pair j < k.
        labels = sorted(record.zeros.labels)
        self._write_csv(
            os.path.join(folder, "gaps.csv"),
            ["j", "k", "gap"],
            (
                {"j": j, "k": k, "gap": float(pairwise_gap(system, record.zeros, j, k).gap.hi)}
                for j in labels
                for k in labels
                if j < k
            ),
        )
        self.view.update_status(f"Operator report written to {folder}")
        return bundle, report, checklist

    def gaps(self, path, j, epsilon):
        """Certified limit gap for f_j (see certify.limit_gap)."""
        state = self.load_state(path)
        cert = limit_gap(self._certified_records(state), j, epsilon, state.schedule)
        self.view.show_gap(cert)
        return cert

    def audit(self, path, samples=1000, seed=0, output=None):
        """
        Structural checks, completeness certificates for every stage and atom,
        the random A_N audit and the finite-stage checklist of the last stage.
        """
        state = self.load_state(path)
        records = self._certified_records(state)
        # Completeness is certified for every atom m of every stage N.
        result = {
            "structural": structural_checks(state.system),
            "completeness": [
                completeness_certificate(records, state.system, r.N, m).to_dict()
                for r in records
                for m in range(1, r.N + 1)
            ],
            "basis_constant": [
                audit_basis_constant(state.system_at(r.N), r, samples, seed) for r in records
            ],
        }
        last = records[-1]
        # The checklist needs at least two eigenvectors.
        if last.N >= 2:
            ctx = PrecisionContext(bits=last.precision_bits, max_bits=max(last.precision_bits, state.ctx.max_bits))
            bundle = build_bundle(state.system, last.zeros, ctx)
            result["checklist"] = grivaux_checklist(state.system, last.zeros, bundle)
        self.view.show_audit(result)
        if output:
            self._write_json(output, result)
        return result
