"""
ASGI entry point for the Liouville laboratory API.

Serves the archived-run and synchronous experiment endpoints; long runs
belong to ``python manage.py lab``.
"""

import os

from django.core.asgi import get_asgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')

application = get_asgi_application()
