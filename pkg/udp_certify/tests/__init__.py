#!/usr/bin/env python

"""
udp_certify/tests/__init__.py

The mere existence of this file makes Python treat the directory as a package.

"""
