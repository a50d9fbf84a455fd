"""Checkpoint-to-kernel-bank export tool."""

from .export import ExportManifest, export_bank, load_checkpoint, main

__all__ = ["ExportManifest", "export_bank", "load_checkpoint", "main"]
