from rest_framework import permissions
import logging

logger = logging.getLogger(__name__)


class IsStaffOrReadOnly(permissions.BasePermission):
    """
    Anyone may browse recorded experiments; starting or deleting a run,
    which executes the simulator synchronously, is reserved to staff users.
    """

    def has_permission(self, request, view):
        if request.method in permissions.SAFE_METHODS:
            return True

        if request.user and request.user.is_authenticated and request.user.is_staff:
            logger.debug(f"Staff user {request.user.username} attempting {request.method}")
            return True

        logger.warning(f"Non-staff user attempting {request.method} on {request.path}")
        return False
