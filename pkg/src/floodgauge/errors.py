class FloodGaugeError(Exception):
    """Base class for every error raised by this package."""


# reference model
class UnknownProfile(FloodGaugeError, LookupError):
    pass


class UnknownKind(FloodGaugeError, LookupError):
    pass


class UnknownLandmark(FloodGaugeError, LookupError):
    pass


class InvalidFraction(FloodGaugeError, ValueError):
    pass


class LandmarkOrder(FloodGaugeError, ValueError):
    pass


class InvalidObservation(FloodGaugeError, ValueError):
    pass


class InvalidProfile(FloodGaugeError, ValueError):
    pass


# LMM client
class ImageDecodeError(FloodGaugeError, ValueError):
    pass


class ProviderTimeout(FloodGaugeError):
    pass


class ProviderRejection(FloodGaugeError):
    def __init__(self, status: int, message: str):
        super().__init__(f"provider rejected request (HTTP {status}): {message}")
        self.status = status
        self.message = message


class MissingFixture(FloodGaugeError, LookupError):
    pass


class MissingCredentials(FloodGaugeError):
    pass


# response parser
class NoDepthFound(FloodGaugeError, ValueError):
    pass


class ImplausibleDepth(FloodGaugeError, ValueError):
    pass


class UnknownUnit(FloodGaugeError, ValueError):
    pass


# evaluation
class LengthMismatch(FloodGaugeError, ValueError):
    pass


class EmptyInput(FloodGaugeError, ValueError):
    pass


class ZeroVariance(FloodGaugeError, ValueError):
    pass


class EmptyAnnotations(FloodGaugeError, ValueError):
    pass


class MissingEstimate(FloodGaugeError):
    def __init__(self, photo_ids):
        self.photo_ids = list(photo_ids)
        super().__init__("no model estimate for: " + ", ".join(self.photo_ids))


# dataset store
class ManifestParseError(FloodGaugeError, ValueError):
    pass


class DuplicatePhotoId(ManifestParseError):
    pass


class InvalidCoordinate(ManifestParseError):
    pass


class DuplicateRunId(FloodGaugeError):
    pass


class StorageFailure(FloodGaugeError, OSError):
    pass


class MissingRun(FloodGaugeError, LookupError):
    pass
