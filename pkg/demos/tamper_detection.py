"""
Catching a tampered slice
=========================

Runs the full scenario on a virtual clock: the first audit confirms the
anchored configuration, then the slice quantum is changed and the next
audit flags it.
"""
import logging

from sliceguard.harness import ScenarioConfig, run_scenario

# The auditor logs one line per verdict.
audit = logging.getLogger("sliceguard.audit")
audit.addHandler(logging.StreamHandler())
audit.setLevel(logging.INFO)

config = ScenarioConfig(cron_interval_ticks=10, quantum_initial=100, quantum_tampered=200)
transcript = run_scenario(config)

print("verdicts:", transcript.verdicts)

# Every step is recorded; the transcript is byte-stable across runs.
for entry in transcript.entries:
    print(entry["tick"], entry["component"], entry["event"])
