import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'fairshare.settings')
django.setup()
