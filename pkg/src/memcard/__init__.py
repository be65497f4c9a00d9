"""Forensic extraction of phone memory card images.

Parses FAT volumes read-only, sorts their files into categories, carves
deleted content, decrypts and merges BlackBerry WhatsApp message stores and
writes deterministic HTML/JSON reports.
"""

__version__ = "0.1.0"
