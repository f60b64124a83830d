#!/usr/bin/env python
"""
Entry point for the synchrony toolkit.

    python manage.py simulate config.yaml --output spikes.csv --seed 1
    python manage.py mine spikes.csv --expiry 5 --epsilon 0.05
    python manage.py threshold --L 50000 --T 5 --n 3 --rho 5
    python manage.py baseline spikes.csv --expiry 5
    python manage.py bench --vary expiry 3 5 8 10
"""
import os
import sys


def main():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "core.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Is it installed (pip install -r requirements.txt) "
            "and is the virtual environment active?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
