// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sentinel/data.hpp"

namespace sentinel {

enum class AttackKind { AltitudeDrift, GroundspeedDrift, HeadingDrift, StandingStill };

std::string attack_name(AttackKind k);

// per-message drift increments
constexpr double kAltitudeDeltaFt = 82.0;
constexpr double kGroundspeedDeltaKn = 1.9;
constexpr double kHeadingDeltaDeg = 1.0;
constexpr int kStandingStillK = 20;  // ~200 s at 10 s cadence

struct AttackSpec {
  AttackKind kind = AttackKind::AltitudeDrift;
  double delta = kAltitudeDeltaFt;  // drift increment per message
  int window_k = kStandingStillK;   // standing-still span
  int start_index = 0;
};

double default_delta(AttackKind k);

struct Injection {
  FlightSequence flight;  // tampered copy, original untouched
  int begin = 0;          // attacked index range [begin, end)
  int end = 0;
};

// k-th attacked message gets original + (k+1)*delta on the targeted feature;
// runs from start_index to the end of the flight. Heading wraps into [0,360).
Injection inject_gradual(const FlightSequence& flight, AttackKind kind, double delta,
                         int start_index);

// Zeroes groundspeed and freezes lat/lon at start_index for K records.
Injection inject_standing_still(const FlightSequence& flight, int k, int start_index);

struct OracleFinding {
  enum class Result { NoDifference, Ambiguous, Detected };
  Result result = Result::NoDifference;
  AttackKind kind = AttackKind::AltitudeDrift;
  int begin = 0, end = 0;
  double delta = 0.0;
};

// Test-side verifier: diffs two flights and infers which injector produced the
// tampering. Never consulted by the IDS itself.
OracleFinding attack_oracle(const FlightSequence& original, const FlightSequence& tampered);

// class ids shared with Dataset C and the ensemble
constexpr int kClassAltitude = 0;
constexpr int kClassGroundspeed = 1;
constexpr int kClassHeading = 2;
constexpr int kClassBenign = 3;
constexpr int kClassUnseenAttack = 4;  // standing-still ground truth marker

struct DatasetSplit {
  std::vector<FeatureWindow> train;
  std::vector<FeatureWindow> test;
};

struct DatasetB {
  // subset order: altitude-vs-rest, groundspeed-vs-rest, heading-vs-rest, benign-vs-rest
  std::array<DatasetSplit, 4> subsets;
  static const std::array<std::string, 4> kSubsetNames;
};

struct DatasetC {
  DatasetSplit windows;  // labels kClassAltitude..kClassBenign
};

struct BuildOptions {
  int sequence_length = 50;
  double train_fraction = 0.8;
  int windows_per_flight = 1;
  std::array<double, 3> deltas = {kAltitudeDeltaFt, kGroundspeedDeltaKn, kHeadingDeltaDeg};
  int standing_still_k = kStandingStillK;
};

DatasetB build_dataset_b(const std::vector<FlightSequence>& flights, std::uint64_t seed,
                         const BuildOptions& opts = {});

DatasetC build_dataset_c(const std::vector<FlightSequence>& flights, std::uint64_t seed,
                         const BuildOptions& opts = {});

// Half benign (kClassBenign), half standing-still (kClassUnseenAttack);
// evaluation-only material for the unseen-attack protocol.
std::vector<FeatureWindow> build_unseen_windows(const std::vector<FlightSequence>& flights,
                                                std::uint64_t seed,
                                                const BuildOptions& opts = {});

// window id, flight id, start index, split tag, label, then L*6 raw values
void write_windows_csv(const std::string& path, const std::vector<FeatureWindow>& windows,
                       const std::string& split_tag);
void append_windows_csv(const std::string& path, const std::vector<FeatureWindow>& windows,
                        const std::string& split_tag, bool header);
std::vector<FeatureWindow> read_windows_csv(const std::string& path,
                                            const std::string& split_filter = "");

}  // namespace sentinel
