"""Typed errors raised across the pipeline.

Every error carries enough context to be actionable: offending line
numbers, file paths, exit codes, or the tail of a compiler log.
"""

from __future__ import annotations


class OptimasError(Exception):
    """Base class for all pipeline errors."""


# --- ingestion ---

class MalformedRow(OptimasError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DuplicateKernel(OptimasError):
    def __init__(self, kernel_name: str):
        self.kernel_name = kernel_name
        super().__init__(f"duplicate kernel entry: {kernel_name}")


class UnknownKernel(OptimasError):
    def __init__(self, kernel_name: str, where: str):
        self.kernel_name = kernel_name
        super().__init__(f"{where} references unknown kernel: {kernel_name}")


class MissingRuntimeColumn(OptimasError):
    pass


class RaggedRow(MalformedRow):
    pass


class FewerThanTwoRuns(OptimasError):
    pass


class ParseError(OptimasError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class NonZeroExit(OptimasError):
    def __init__(self, code: int, stderr_tail: str):
        self.code = code
        self.stderr_tail = stderr_tail
        super().__init__(f"profiler exited with code {code}: {stderr_tail.strip()[-200:]}")


class MissingOutput(OptimasError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"declared profiler output missing: {path}")


# --- analysis ---

class EmptyProfile(OptimasError):
    pass


class NonPositivePeak(OptimasError):
    def __init__(self, kernel_name: str, field: str):
        self.kernel_name = kernel_name
        self.field = field
        super().__init__(f"{kernel_name}: {field} must be positive")


# --- counter selection ---

class AllColumnsDegenerate(OptimasError):
    pass


class DimensionMismatch(OptimasError):
    def __init__(self, reason: str):
        super().__init__(reason)


class SingularSystem(OptimasError):
    pass


# --- prompt construction / response parsing ---

class NoDiagnostics(OptimasError):
    pass


class LineTooLong(OptimasError):
    def __init__(self, line_no: int, length: int, limit: int):
        self.line_no = line_no
        self.length = length
        self.limit = limit
        super().__init__(f"source line {line_no} is {length} chars; chunk limit is {limit}")


class MissingCodeBlock(OptimasError):
    pass


class MultipleCodeBlocks(OptimasError):
    def __init__(self, count: int):
        self.count = count
        super().__init__(f"expected exactly one fenced code block, found {count}")


# --- model gateway ---

class AuthMissing(OptimasError):
    def __init__(self, env_var: str):
        self.env_var = env_var
        super().__init__(f"credential environment variable not set: {env_var}")


class TransportExhausted(OptimasError):
    def __init__(self, attempts: int, last_error: str):
        self.attempts = attempts
        self.last_error = last_error
        super().__init__(f"transport failed after {attempts} attempts: {last_error}")


class BackendRefused(OptimasError):
    def __init__(self, status: int, body_tail: str):
        self.status = status
        self.body_tail = body_tail
        super().__init__(f"backend refused with status {status}: {body_tail[-200:]}")


# --- evaluation ---

class CompilerMissing(OptimasError):
    pass


class RetryExhausted(OptimasError):
    def __init__(self, attempts: int, log: str):
        self.attempts = attempts
        self.log = log
        super().__init__(f"compilation still failing after {attempts} attempts")


class ExecutionFailure(OptimasError):
    def __init__(self, code: int, stderr_tail: str = ""):
        self.code = code
        self.stderr_tail = stderr_tail
        super().__init__(f"program exited with code {code}")


class ZeroBaseline(OptimasError):
    pass


class WriteFailure(OptimasError):
    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"cannot persist {path}: {reason}")


class IncompleteRun(OptimasError):
    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__(f"run directory missing artifacts: {', '.join(missing)}")


class DigestMismatch(OptimasError):
    def __init__(self, name: str, expected: str, actual: str):
        self.name = name
        self.expected = expected
        self.actual = actual
        super().__init__(f"{name}: digest {actual[:12]} does not match manifest {expected[:12]}")


# --- configuration / serving ---

class SchemaViolation(OptimasError):
    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"config key '{key}': {reason}")


class PortInUse(OptimasError):
    def __init__(self, port: int):
        self.port = port
        super().__init__(f"port {port} is already bound")
