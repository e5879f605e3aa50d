from django.urls import path

from .views import CheckGradientsView, MatchView, NmsView

urlpatterns = [
    path('nms/', NmsView.as_view(), name='detections-nms'),
    path('match/', MatchView.as_view(), name='detections-match'),
    path('losses/check-gradients/', CheckGradientsView.as_view(), name='detections-check-gradients'),
]
