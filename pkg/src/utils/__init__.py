"""Shared helpers: logging, validation, coordinate frames"""
