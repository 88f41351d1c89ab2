#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "kgsynth/linalg.hpp"
#include "kgsynth/vocab.hpp"

namespace kgsynth {

struct Event {
    double time = 0.0;  // days
    std::optional<TokenId> lab;
    std::optional<TokenId> med;
    bool ae = false;

    friend bool operator==(const Event&, const Event&) = default;
};

// Shared shape of real patient records and generated trajectories.
struct Trajectory {
    std::int64_t id = 0;
    std::vector<Event> events;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

using PatientRecord = Trajectory;
using SyntheticTrajectory = Trajectory;

// L x V values plus a row mask (1 = real event row).
struct TrajectoryTensor {
    Matrix values;
    std::vector<std::uint8_t> mask;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    std::size_t active_rows() const;
};

// Throws InvalidArgument naming the first violated invariant: strictly
// increasing non-negative times, in-vocabulary ids of the right field, and
// no event with every field absent.
void validate_trajectory(const Trajectory& t, const TokenVocab& vocab);

// JSON Lines: {"id": k, "events": [{"t": .., "lab": "..", "med": "..", "ae": false}]}
// with token names from the vocabulary; absent fields are null.
void write_jsonl(std::ostream& out, const std::vector<Trajectory>& trajectories, const TokenVocab& vocab);
std::vector<Trajectory> read_jsonl(std::istream& in, const TokenVocab& vocab);

}  // namespace kgsynth
