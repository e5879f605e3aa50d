from django.conf import settings


def toolkit(name):
    """Read one toolkit default from settings.DETMATCH."""
    return settings.DETMATCH[name]


def loss_defaults() -> dict:
    return {
        "focal_alpha": toolkit("FOCAL_ALPHA"),
        "focal_gamma": toolkit("FOCAL_GAMMA"),
        "smooth_l1_delta": toolkit("SMOOTH_L1_DELTA"),
        "constraint_weight": toolkit("CONSTRAINT_WEIGHT"),
    }
