"""Exception hierarchy shared by all modules."""


class BandFaithError(Exception):
    """Base class for every error raised by this package."""


# audio io
class MalformedHeader(BandFaithError):
    pass


class UnsupportedEncoding(BandFaithError):
    pass


class EmptyAudio(BandFaithError):
    pass


class IoFailure(BandFaithError):
    pass


class UnlabeledFile(BandFaithError):
    pass


class EmptyDataset(BandFaithError):
    pass


class InvalidProfile(BandFaithError):
    pass


# dsp
class SignalTooShort(BandFaithError):
    pass


class UnsupportedSampleRate(BandFaithError):
    pass


class StatsShapeMismatch(BandFaithError):
    pass


# autodiff
class ShapeMismatch(BandFaithError):
    pass


class NonScalarOutput(BandFaithError):
    pass


class StaleTape(BandFaithError):
    pass


# model
class InsufficientMachines(BandFaithError):
    pass


class NonFiniteLoss(BandFaithError):
    pass


class UnknownMachine(BandFaithError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class CheckpointError(BandFaithError):
    pass


# xai
class NonFiniteGradient(BandFaithError):
    pass


class WindowTooLarge(BandFaithError):
    pass


class LayerNotFound(BandFaithError):
    pass


# statistics
class DegenerateInput(BandFaithError):
    pass


class EmptyList(BandFaithError):
    pass


class SingleClass(BandFaithError):
    pass
