"""Exception hierarchy shared across the ledger, runtime and service layers."""


class MedledgerError(Exception):
    """Base class for every library error."""

    code = "Error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


# --- canonical encoding ------------------------------------------------------

class UnserializableError(MedledgerError):
    code = "Unserializable"


# --- mempool / chain ---------------------------------------------------------

class MalformedTransactionError(MedledgerError):
    code = "MalformedTransaction"


class UnknownSenderError(MedledgerError):
    code = "UnknownSender"


class NonceMismatchError(MedledgerError):
    code = "NonceMismatch"


class EmptyMempoolError(MedledgerError):
    code = "EmptyMempool"


class NotFoundError(MedledgerError):
    code = "NotFound"


# --- runtime -----------------------------------------------------------------

class DuplicateLabelError(MedledgerError):
    code = "DuplicateLabel"


class UnknownContractTypeError(MedledgerError):
    code = "UnknownContractType"


class OutOfGasError(MedledgerError):
    code = "OutOfGas"


class RevertError(MedledgerError):
    """Raised by contract code to abort the current call frame.

    The reason string becomes the receipt's revert reason; well-known reasons
    ("Unauthorized", "UnknownRequest", ...) double as machine-readable codes.
    """

    code = "Reverted"

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# --- record store ------------------------------------------------------------

class SchemaViolationError(MedledgerError):
    code = "SchemaViolation"

    def __init__(self, field_errors):
        super().__init__("; ".join(field_errors))
        self.field_errors = list(field_errors)


class BackendUnavailableError(MedledgerError):
    code = "BackendUnavailable"


class IntegrityMismatchError(MedledgerError):
    code = "IntegrityMismatch"


# --- pubsub ------------------------------------------------------------------

class InvalidFilterError(MedledgerError):
    code = "InvalidFilter"


class UnknownSubscriberError(MedledgerError):
    code = "UnknownSubscriber"


class UnknownSubscriptionError(MedledgerError):
    code = "UnknownSubscription"


class OutOfOrderDispatchError(MedledgerError):
    code = "OutOfOrderDispatch"


# --- service -----------------------------------------------------------------

class DuplicatePatientError(MedledgerError):
    code = "DuplicatePatient"


class UnknownIdentityError(MedledgerError):
    code = "UnknownIdentity"


class ServiceError(MedledgerError):
    """Service-layer failure carrying an HTTP status and optional on-chain revert reason."""

    def __init__(self, code: str, message: str, http_status: int, revert_reason: str | None = None):
        super().__init__(message)
        self.code = code
        self.http_status = http_status
        self.revert_reason = revert_reason
