# -*- coding: utf-8 -*-
"""
This module defines the state model of a construction run.

The ConstructionState class is the central repository for everything a run
has committed so far: the atomic data, one StageRecord per stage, the
schedule, the base parameters and the current working precision. Following
the Model-View-Controller layout of the package, the model only holds data;
the construction engine fills it and the controller saves and loads it.
"""


class ConstructionState:
    """
    Holds the committed stages of one construction.

    Committed data is never modified in place: `commit` appends a stage and
    `truncate` drops stages from the end.

    Attributes:
        schedule (Schedule): The l(N) enumeration.
        base (BaseParams): Stage-1 parameters.
        ctx (PrecisionContext): Working precision reached so far.
        system (ClarkSystem): Atoms of the last committed stage.
        records (list): StageRecord objects, records[N - 1] for stage N.
        meta (dict): Extra metadata carried into the saved document.
    """

    def __init__(self, schedule, base, ctx, meta=None):
        """Initializes an empty state (no committed stage)."""
        self.schedule = schedule
        self.base = base
        self.ctx = ctx
        self.system = None
        self.records = []
        self.meta = dict(meta or {})

    @property
    def N(self):
        """Number of committed stages."""
        return len(self.records)

    @property
    def last_record(self):
        if not self.records:
            raise IndexError("No stage has been committed yet.")
        return self.records[-1]

    def record(self, N):
        """
        Returns the record of stage N (1-based).

        Raises:
            IndexError: If stage N has not been committed.
        """
        if not 1 <= N <= len(self.records):
            raise IndexError(f"Stage {N} is not present (1..{len(self.records)}).")
        return self.records[N - 1]

    def system_at(self, N):
        """The atoms of stage N."""
        self.record(N)
        return self.system.prefix(N)

    def commit(self, system, record):
        """
        Appends a stage.

        Args:
            system (ClarkSystem): Atoms after the stage (one more than before).
            record (StageRecord): The stage's record, with record.N = N + 1.

        Raises:
            ValueError: If the record does not extend the state by one stage.
        """
        if record.N != self.N + 1 or system.N != record.N:
            raise ValueError(f"Cannot commit stage {record.N} on top of stage {self.N}.")
        self.system = system
        self.records.append(record)

    def truncate(self, N):
        """Drops every stage after N."""
        if not 1 <= N <= self.N:
            raise IndexError(f"Cannot truncate to stage {N}.")
        del self.records[N:]
        self.system = self.system.prefix(N)

    def all_passed(self):
        """True when every committed certificate passes."""
        return all(r.passed for r in self.records)
