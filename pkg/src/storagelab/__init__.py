"""storagelab: a trace-driven laboratory for third-party web-storage policies.

Replays crawl traces under permissive, blocking, site-keyed, and page-length
storage policies, and computes the privacy (cross-site / cross-time
trackability) and compatibility (behavior-edge similarity) metrics used to
compare them.
"""

__version__ = "0.1.0"
