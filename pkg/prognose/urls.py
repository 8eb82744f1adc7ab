from django.urls import path
from . import views

urlpatterns = [
    # Startseite / Übersicht der Läufe
    path('', views.home, name='home'),

    # Ergebnistabelle eines Laufs
    path('lauf/<int:run_id>/', views.run_detail, name='run_detail'),

    # Plotdaten je Kreis als JSON
    path('lauf/<int:run_id>/plot/<str:period>/<str:fips>/', views.plot_data, name='plot_data'),
]
