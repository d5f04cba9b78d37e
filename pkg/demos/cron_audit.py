"""
Audit schedule
==============

A cron job on a 10-tick interval fires on the grid, and a late tick
coalesces missed slots into a single run.
"""
from sliceguard.oracle_node import CronSchedule

on_time = CronSchedule(interval_ticks=10, last_fired=0)
print("every tick 0..35:", [t for t in range(36) if on_time.due(t)])

late = CronSchedule(interval_ticks=10, last_fired=0)
print("ticks 5, 37, 41:", [t for t in (5, 37, 41) if late.due(t)])
print("next slot after coalescing:", late.last_fired + late.interval_ticks)
