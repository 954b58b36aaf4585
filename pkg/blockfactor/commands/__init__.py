"""Subcommands; each module exposes `command` and is picked up by main.py."""
