#!/usr/bin/env python3
"""Walk through the offloading arithmetic: when should a small drone ship a
frame to its cluster leader instead of detecting locally?"""

from iodsim import devices
from iodsim.devices import Battery, endurance_s
from iodsim.offload import LinkStatus, PolicyConfig, decide
from iodsim.reporting import offload_table

intel = devices.intel_up_profile()
jetson = devices.jetson_xavier_nx_profile()

print("Small-drone board:", intel.board_name)
for algo in intel.algorithms():
    entry = intel.entry(algo)
    print(f"  {algo:14} {entry.fps:5.1f} fps  "
          f"{intel.per_frame_latency_ms(algo):7.1f} ms/frame  "
          f"{intel.processing_energy_mj(algo):7.0f} mJ/frame")

print("\nLeader board:", jetson.board_name)
for mode in jetson.modes:
    latency = jetson.per_frame_latency_ms(devices.YOLOV3_TINY, mode.id)
    print(f"  {mode.id:10} YOLOv3-tiny {latency:6.2f} ms/frame")

print("\nDecision table (frame planning latency 300 ms, tx power 3250 mW):\n")
print(offload_table())

# the headline case: YOLOv3-tiny everywhere
restricted_small = devices.DeviceProfile(
    intel.board_name, intel.idle_power_mw, intel.modes, intel.default_mode,
    {k: v for k, v in intel.entries.items() if k[0] == devices.YOLOV3_TINY})
restricted_big = devices.DeviceProfile(
    jetson.board_name, jetson.idle_power_mw, jetson.modes, jetson.default_mode,
    {k: v for k, v in jetson.entries.items() if k[0] == devices.YOLOV3_TINY})
decision = decide(restricted_small, restricted_big, LinkStatus(up=True),
                  PolicyConfig(min_accuracy=0.0, max_latency_ms=10_000.0))
p = decision.predicted
print(f"\nYOLOv3-tiny head to head: local {p.local_latency_ms:.0f} ms / "
      f"{p.local_energy_mj:.0f} mJ  vs  offload {p.offload_latency_ms:.0f} ms / "
      f"{p.offload_energy_mj:.0f} mJ  ->  {decision.action}")

# why the leader can afford it: the board is noise next to the rotors
battery = Battery(devices.BIG_DRONE_BATTERY_MJ)
base = endurance_s(battery, 1500.0)
loaded = endurance_s(battery, 1500.0 + 18.62)
print(f"\nLeader endurance: hover only {base:.0f} s, with the board at full "
      f"tilt {loaded:.1f} s ({(base - loaded) / base * 100:.2f}% less)")
