# -*- coding: utf-8 -*-
"""
Conversion between construction states and their JSON documents.

Every real number is stored as an interval record {"mid", "rad", "bits"} of
exact decimal strings, so a document converts back to the very same
intervals and re-serialises byte for byte. The per-stage values t_N, mu_N and
c_N are not duplicated in the stage entries; they are read from the "atoms"
list, which is the only input `verify` trusts.
"""
import json

from .certreal import CertReal, PrecisionContext
from .construct import BaseParams, Certificate, Schedule, StageRecord
from .errors import DomainError, SchemaError
from .herglotz import Atom, ClarkSystem, Zero, ZeroSet
from .model import ConstructionState

SCHEMA = "clark-construction-state"
VERSION = "1.0"


def _real(value):
    return None if value is None else value.to_record()


def certificate_to_dict(cert):
    return {
        "name": cert.name,
        "index": cert.index,
        "side": cert.side,
        "status": cert.status,
        "lhs_upper": _real(cert.lhs_upper),
        "rhs_lower": _real(cert.rhs_lower),
        "margin": _real(cert.margin),
        "precision_bits": cert.precision_bits,
    }


def zero_to_dict(label, zero):
    return {
        "j": label,
        "lambda": _real(zero.lam),
        "bracket": [_real(zero.bracket[0]), _real(zero.bracket[1])],
        "interval_index": zero.interval_index,
    }


def record_to_dict(record):
    """Stage entry of the document (t_N, mu_N, c_N live in "atoms")."""
    return {
        "N": record.N,
        "epsilon": _real(record.epsilon),
        "delta": _real(record.delta),
        "basis_const": _real(record.basis_const),
        "sigma_min": _real(record.sigma_min),
        "schedule_target": record.schedule_target,
        "precision_bits": record.precision_bits,
        "zeros": [zero_to_dict(j, z) for j, z in record.zeros.in_label_order()],
        "certificates": [certificate_to_dict(c) for c in record.certificates],
    }


def state_to_document(state, tolerances=None):
    """
    Builds the JSON-ready document of a construction state.

    Args:
        state (ConstructionState): A state with at least one stage.
        tolerances (dict, optional): Spectral tolerances to record in "meta".

    Returns:
        dict: {"meta": ..., "atoms": [...], "stages": [...]}.
    """
    ctx = state.ctx
    meta = {
        "schema": SCHEMA,
        "version": VERSION,
        "precision": {
            "bits": ctx.bits,
            "max_bits": ctx.max_bits,
            "escalation_factor": ctx.escalation_factor,
        },
        "schedule": state.schedule.to_text(),
        "base": {
            "t1": _real(state.base.t1),
            "mu1": _real(state.base.mu1),
            "c1": _real(state.base.c1),
        },
        "tolerances": dict(tolerances or state.meta.get("tolerances", {})),
    }
    atoms = [
        {"n": n, "t": _real(a.t), "mu": _real(a.mu), "c": _real(a.c)}
        for n, a in enumerate(state.system.atoms, start=1)
    ]
    return {
        "meta": meta,
        "atoms": atoms,
        "stages": [record_to_dict(r) for r in state.records],
    }


def dumps(document):
    """Deterministic JSON text of a document."""
    return json.dumps(document, indent=4) + "\n"


# ------------------------------------------------------------------- parsing


def _require(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"Missing field '{key}' in {where}.")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"Field '{key}' in {where} has the wrong type.")
    return value


def _parse_real(record, where, optional=False):
    if record is None and optional:
        return None
    if not isinstance(record, dict):
        raise SchemaError(f"Expected an interval record in {where}.")
    for key in ("mid", "rad", "bits"):
        _require(record, key, None, where)
    try:
        return CertReal.from_record(record)
    except (ValueError, ArithmeticError, DomainError) as e:
        raise SchemaError(f"Invalid interval record in {where}: {e}") from None


def certificate_from_dict(data, where):
    return Certificate(
        name=_require(data, "name", str, where),
        lhs_upper=_parse_real(_require(data, "lhs_upper", dict, where), where),
        rhs_lower=_parse_real(_require(data, "rhs_lower", dict, where), where),
        precision_bits=_require(data, "precision_bits", int, where),
        index=data.get("index"),
        side=data.get("side"),
        status=_require(data, "status", str, where),
    )


def _zeros_from_dict(entries, system, bits, where):
    poles = tuple(t for t, _ in system.sorted_poles())
    items = []
    for k, entry in enumerate(entries):
        w = f"{where}.zeros[{k}]"
        bracket = _require(entry, "bracket", list, w)
        if len(bracket) != 2:
            raise SchemaError(f"Bracket of {w} needs two points.")
        zero = Zero(
            lam=_parse_real(_require(entry, "lambda", dict, w), w),
            bracket=(_parse_real(bracket[0], w), _parse_real(bracket[1], w)),
            interval_index=_require(entry, "interval_index", int, w),
        )
        items.append((_require(entry, "j", int, w), zero))
    if sorted(j for j, _ in items) != list(range(1, system.N + 1)):
        raise SchemaError(f"{where} must list one zero per atom.")
    items.sort(key=lambda p: p[1].interval_index)
    return ZeroSet(
        tuple(z for _, z in items),
        poles,
        CertReal(0, bits=bits),
        tuple(j for j, _ in items),
    )


def record_from_dict(data, system, where):
    """Rebuilds a StageRecord; `system` holds the atoms of that stage."""
    N = _require(data, "N", int, where)
    if N != system.N:
        raise SchemaError(f"{where} does not match the number of atoms.")
    bits = _require(data, "precision_bits", int, where)
    atom = system.atom(N)
    certificates = tuple(
        certificate_from_dict(c, f"{where}.certificates[{i}]")
        for i, c in enumerate(data.get("certificates", []))
    )
    return StageRecord(
        N=N,
        epsilon=_parse_real(data.get("epsilon"), where, optional=True),
        t_new=atom.t,
        mu_new=atom.mu,
        c_new=atom.c,
        delta=_parse_real(_require(data, "delta", dict, where), where),
        basis_const=_parse_real(_require(data, "basis_const", dict, where), where),
        sigma_min=_parse_real(_require(data, "sigma_min", dict, where), where),
        schedule_target=data.get("schedule_target"),
        precision_bits=bits,
        zeros=_zeros_from_dict(_require(data, "zeros", list, where), system, bits, where),
        certificates=certificates,
    )


def document_to_state(document):
    """
    Parses a document back into a ConstructionState.

    Raises:
        SchemaError: On a missing or malformed field, or a foreign schema or
            version.
    """
    meta = _require(document, "meta", dict, "document")
    if meta.get("schema") != SCHEMA:
        raise SchemaError(f"Not a {SCHEMA} document.")
    if meta.get("version") != VERSION:
        raise SchemaError(f"Unsupported version {meta.get('version')!r}; expected {VERSION}.")
    precision = _require(meta, "precision", dict, "meta")
    try:
        ctx = PrecisionContext(
            bits=_require(precision, "bits", int, "meta.precision"),
            max_bits=_require(precision, "max_bits", int, "meta.precision"),
            escalation_factor=_require(precision, "escalation_factor", int, "meta.precision"),
        )
        schedule = Schedule.parse(_require(meta, "schedule", str, "meta"))
    except ValueError as e:
        raise SchemaError(str(e)) from None
    base_data = _require(meta, "base", dict, "meta")
    base = BaseParams(
        *(_parse_real(_require(base_data, k, dict, "meta.base"), "meta.base") for k in ("t1", "mu1", "c1"))
    )

    atoms = []
    for i, entry in enumerate(_require(document, "atoms", list, "document")):
        where = f"atoms[{i}]"
        if _require(entry, "n", int, where) != i + 1:
            raise SchemaError(f"{where} is out of order.")
        atoms.append(
            Atom(
                _parse_real(_require(entry, "t", dict, where), where),
                _parse_real(_require(entry, "mu", dict, where), where),
                _parse_real(_require(entry, "c", dict, where), where),
            )
        )
    stages = _require(document, "stages", list, "document")
    # Stage N added atom N.
    if not atoms or len(stages) != len(atoms):
        raise SchemaError("The document needs one stage entry per atom.")
    try:
        system = ClarkSystem(tuple(atoms))
    except DomainError as e:
        raise SchemaError(str(e)) from None

    # Every stage is committed on its own prefix of the atoms.
    state = ConstructionState(schedule, base, ctx, meta={"tolerances": meta.get("tolerances", {})})
    for i, entry in enumerate(stages):
        sub = system.prefix(i + 1)
        state.commit(sub, record_from_dict(entry, sub, f"stages[{i}]"))
    return state


def loads(text):
    """Parses JSON text into a ConstructionState."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"Invalid JSON: {e}") from None
    return document_to_state(document)
