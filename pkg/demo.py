#!/usr/bin/env python3
"""
Demo script for skyheight
"""

import sys
import os

import numpy as np

# Add the current directory to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from skyheight import (
    Channel,
    CityGenerator,
    ExperimentConfig,
    ExperimentHarness,
    RadioParams,
    UavEnvironment,
)


def demo_city():
    """Generate a city and look at one link"""
    print("=== City Demo ===\n")

    topology = CityGenerator.generate(bs_density_km2=5.0, build_density_km2=500.0, seed=42)
    print(f"Base stations: {topology.n_bss}")
    print(f"Buildings: {topology.buildings.count} (pitch {topology.buildings.pitch_m:.2f} m)")

    params = RadioParams()
    serving = topology.nearest_bs(-500.0, 0.0)
    for height in (40.0, 100.0, 160.0):
        sinr = Channel.sinr(topology, (-500.0, 0.0, height), serving, params)
        print(f"  h = {height:5.1f} m: SE {Channel.spectral_efficiency(sinr):.3f} bits/s/Hz")
    print()
    return topology


def demo_genie(topology):
    """Follow the genie for a few steps"""
    print("=== Genie Demo ===\n")

    env = UavEnvironment(topology, RadioParams())
    state = env.reset()
    for _ in range(5):
        action = env.genie_action(state)
        state, reward, _ = env.step(state, action)
        print(f"  x = {state.x_m:6.1f} m, h = {state.h_m:5.1f} m, SE {reward:.3f}")
    print()


def demo_cell():
    """Run a short experiment cell for each baseline and the DQN agent"""
    print("=== Experiment Demo ===\n")

    config = ExperimentConfig(
        bs_densities_km2=[5.0],
        build_densities_km2=[500.0],
        episodes=5,
        policies=["constant", "random", "dqn"],
        variants=["basic"],
        replicates=1,
        master_seed=7,
    )
    harness = ExperimentHarness(config)
    summary, _ = harness.execute(harness.cells(), "demo_results")
    for row in summary.itertuples(index=False):
        print(f"  {row.cell_id:32s} {row.mean_throughput_bits_hz:8.2f} bits/Hz")
    print(f"\nMean over cells: {np.mean(summary['mean_throughput_bits_hz']):.2f}")
    print("Outputs written to demo_results/")


def main():
    """Run all demos"""
    print("skyheight Demo")
    print("=" * 50)
    print()

    try:
        topology = demo_city()
        demo_genie(topology)
        demo_cell()
        print("\n=== Demo Complete ===")
    except Exception as e:
        print(f"Demo failed: {e}")
        import traceback
        traceback.print_exc()


if __name__ == "__main__":
    main()
