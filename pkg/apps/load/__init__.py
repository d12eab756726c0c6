"""
LoAd Platform - Local Adaptive Application

This Django application provides the LoAd pipeline: a minimal tensor engine,
the domain localisation network and its domainness maps, the LoAd object
classifier, synthetic two-domain data, the experiment protocols and the
command-line subcommands that drive them.

Created:    2026
License:    MIT - See LICENSE file
"""
