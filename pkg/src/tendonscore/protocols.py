"""Acquisition schedule, protocol identifiers and survey parameters."""

PROTOCOLS = ("PD", "T1", "T2", "T2MAP", "T2STARGRE", "T2STARGREMIN",
             "IDEALF", "IDEALP", "IDEALOP", "IDEALW")
PROTOCOL_CODE = {name: i for i, name in enumerate(PROTOCOLS)}

# timestep index -> weeks after surgery (0 = before reconstruction)
WEEKS = (0, 1, 3, 6, 9, 12, 20, 26, 40, 52)
N_TIMESTEPS = len(WEEKS)

SURVEY_PARAMS = ("SCT", "TT", "STE", "TE", "TU", "TisE")
REGRESSION_TARGETS = ("STE", "TE", "TisE")


def protocol_name(code):
    return PROTOCOLS[code]


def protocol_code(name):
    try:
        return PROTOCOL_CODE[name]
    except KeyError:
        from .errors import ValidationError
        raise ValidationError(f"unknown protocol {name!r}; expected one of {', '.join(PROTOCOLS)}") from None


def protocol_order(names):
    """Sort protocol names by the canonical order (unknown names last, alphabetical)."""
    return sorted(names, key=lambda n: (PROTOCOL_CODE.get(n, len(PROTOCOLS)), n))


def week(timestep):
    return WEEKS[timestep]
