"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class SfcError(Exception):
    """Base class for every error raised by this package."""


# --- job declaration / validation ---

class JobSpecError(SfcError):
    """A declaration violated the builder's structural rules."""


class DuplicateStateId(JobSpecError):
    pass


class EmptyFields(JobSpecError):
    pass


class UnknownStateId(JobSpecError):
    pass


class ReadWithMultipleStates(JobSpecError):
    pass


class UnknownAccessId(JobSpecError):
    pass


class EmptyTransaction(JobSpecError):
    pass


class UnknownTxnId(JobSpecError):
    pass


class TxnAlreadyOwned(JobSpecError):
    pass


class MissingCrossFlowUdf(JobSpecError):
    pass


class UnknownParent(JobSpecError):
    pass


class BadStage(JobSpecError):
    pass


class JobFrozen(JobSpecError):
    """Mutation attempted after the job was validated/started."""


class JobValidationError(SfcError):
    """Aggregated close-out validation failure.

    `violations` is a list of (code, message) pairs, e.g. ("CycleDetected", ...).
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{code}: {msg}" for code, msg in self.violations)
        super().__init__(f"job validation failed: {lines}")


# --- versioned store ---

class StoreError(SfcError):
    pass


class UnknownKey(StoreError):
    pass


class DuplicateSeq(StoreError):
    pass


class EpochNotQuiesced(StoreError):
    pass


class WouldBreakSnapshot(StoreError):
    pass


# --- TPG construction ---

class TpgError(SfcError):
    pass


class UnknownTemplate(TpgError):
    pass


class MissingTargetKey(TpgError):
    pass


class CycleDetected(TpgError):
    pass


# --- execution ---

class EngineError(SfcError):
    pass


class FieldNotInSchema(EngineError):
    pass


class TxnAbortedError(EngineError):
    """Write attempted on a data holder whose transaction already aborted."""


class UdfPanic(EngineError):
    """A user-defined function raised; the owning transaction is aborted."""


class ShardingConflict(EngineError):
    """Process-sharded execution requested for a batch with cross-shard keys."""


# --- resilience ---

class UnknownVnf(SfcError):
    pass


class NoSnapshotAvailable(SfcError):
    pass


# --- wire codec ---

class CodecError(SfcError):
    pass


class BadMagic(CodecError):
    pass


class UnknownVersion(CodecError):
    pass


class TruncatedPayload(CodecError):
    pass


class MalformedPayload(CodecError):
    pass
