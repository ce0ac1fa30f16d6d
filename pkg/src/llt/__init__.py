"""Telnet loader-session analysis toolkit.

Captures telnet intrusion sessions, tokenizes the recorded request bytes,
embeds them in a token/n-gram count space, clusters them hierarchically,
extracts per-cluster command templates by sequence alignment, and supports
an analyst refinement loop that yields named loader families and an
exportable lineage dendrogram.
"""

__version__ = "0.1.0"
