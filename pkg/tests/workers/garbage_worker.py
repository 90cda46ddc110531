"""Test worker: answers every request with malformed JSON."""
import sys

for _ in sys.stdin:
    print("{not json", flush=True)
