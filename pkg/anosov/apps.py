from django.apps import AppConfig


class AnosovConfig(AppConfig):
    name = 'anosov'
