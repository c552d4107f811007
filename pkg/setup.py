#!/usr/bin/env python3

from setuptools import setup

setup(use_scm_version=True)
