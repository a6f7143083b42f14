"""Walk through the wireless link model: path loss, Shannon rate, and the
delay decomposition for a UAV offloading one task to a base station and to
the satellite.

Run: python3 demos/link_budget.py
"""

from sagin_sched.core import (BASE_STATION, ComputeDevice, DeviceId, LOCAL,
                              Position, SATELLITE, Task, computing_delay,
                              data_rate, path_loss_db, propagation_delay,
                              transmission_delay)
from sagin_sched.env import default_bs_channel, default_sat_channel


def main():
    task = Task(id=0, origin_uav=0, data_bits=50e6, cycles_per_bit=40.0,
                deadline=0.2, arrival_slot=0)
    print(f"task: {task.data_bits / 1e6:.0f} Mbit, "
          f"{task.workload_cycles / 1e9:.1f} Gcycles, "
          f"deadline {task.deadline * 1e3:.0f} ms\n")

    bs_ch = default_bs_channel()
    print("base-station link (two-ray model), rate vs distance:")
    for d in (100.0, 500.0, 1000.0, 2000.0):
        pl = path_loss_db(d, bs_ch)
        rate = data_rate(pl, bs_ch)
        print(f"  d = {d:6.0f} m  PL = {pl:6.1f} dB  "
              f"rate = {rate / 1e9:7.3f} Gbit/s")

    bs = ComputeDevice(DeviceId(BASE_STATION, 1), Position(0, 0, 0), 30e9)
    d = 800.0
    tx = transmission_delay(task, data_rate(path_loss_db(d, bs_ch), bs_ch),
                            bs.id, d, bs_ch)
    comp = computing_delay(task, bs)
    print(f"\noffload to a 30 GHz BS at {d:.0f} m:")
    print(f"  transmission {tx * 1e3:6.2f} ms + computing {comp * 1e3:6.2f} ms"
          f" = {(tx + comp) * 1e3:6.2f} ms  "
          f"({'on time' if tx + comp <= task.deadline else 'late'})")

    sat_ch = default_sat_channel()
    sat = ComputeDevice(DeviceId(SATELLITE), Position(0, 0, 780e3), 100e9)
    d_sat = 780e3
    prop = propagation_delay(sat.id, d_sat, sat_ch)
    tx = transmission_delay(task, data_rate(path_loss_db(d_sat, sat_ch),
                                            sat_ch), sat.id, d_sat, sat_ch)
    comp = computing_delay(task, sat)
    print(f"\noffload to the LEO satellite ({d_sat / 1e3:.0f} km):")
    print(f"  propagation {prop * 1e3:.2f} ms inside transmission "
          f"{tx * 1e3:6.2f} ms + computing {comp * 1e3:5.2f} ms "
          f"= {(tx + comp) * 1e3:6.2f} ms")

    local = ComputeDevice(DeviceId(LOCAL, 0), Position(0, 0, 100), 2e9)
    print(f"\nlocal execution on the 2 GHz UAV CPU: "
          f"{computing_delay(task, local) * 1e3:.0f} ms "
          f"(misses the {task.deadline * 1e3:.0f} ms deadline)")


if __name__ == "__main__":
    main()
