"""
URL configuration for the detmatch_site project.
"""
from django.contrib import admin
from django.urls import path, include

urlpatterns = [
    path('admin/', admin.site.urls),
    path('api/detections/', include('detections.urls')),
    path('api/evaluation/', include('evaluation.urls')),
    path('api/simulation/', include('simulation.urls')),
    path('api-auth/', include('rest_framework.urls')),
]
