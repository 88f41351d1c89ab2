#include "kgsynth/trajectory.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "kgsynth/error.hpp"

namespace kgsynth {

std::size_t TrajectoryTensor::active_rows() const {
    std::size_t n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    return n;
}

void validate_trajectory(const Trajectory& t, const TokenVocab& vocab) {
    const auto where = [&](std::size_t i) {
        return "trajectory " + std::to_string(t.id) + " event " + std::to_string(i) + ": ";
    };
    auto check_token = [&](std::size_t i, const std::optional<TokenId>& tok, Field f) {
        if (!tok) return;
        if (*tok >= vocab.size()) throw InvalidArgument(where(i) + "token id out of range");
        if (vocab.token(*tok).field != f) throw InvalidArgument(where(i) + "token in the wrong field");
    };
    for (std::size_t i = 0; i < t.events.size(); ++i) {
        const auto& e = t.events[i];
        if (!std::isfinite(e.time) || e.time < 0.0) throw InvalidArgument(where(i) + "bad time");
        if (i > 0 && !(e.time > t.events[i - 1].time))
            throw InvalidArgument(where(i) + "times not strictly increasing");
        check_token(i, e.lab, Field::Lab);
        check_token(i, e.med, Field::Med);
        if (!e.lab && !e.med && !e.ae) throw InvalidArgument(where(i) + "event has no fields");
    }
}

void write_jsonl(std::ostream& out, const std::vector<Trajectory>& trajectories, const TokenVocab& vocab) {
    for (const auto& t : trajectories) {
        nlohmann::json events = nlohmann::json::array();
        for (const auto& e : t.events) {
            nlohmann::json ev;
            ev["t"] = e.time;
            ev["lab"] = e.lab ? nlohmann::json(vocab.token(*e.lab).name) : nlohmann::json(nullptr);
            ev["med"] = e.med ? nlohmann::json(vocab.token(*e.med).name) : nlohmann::json(nullptr);
            ev["ae"] = e.ae;
            events.push_back(std::move(ev));
        }
        nlohmann::json line;
        line["id"] = t.id;
        line["events"] = std::move(events);
        out << line.dump() << '\n';
    }
}

std::vector<Trajectory> read_jsonl(std::istream& in, const TokenVocab& vocab) {
    std::vector<Trajectory> out;
    std::string line;
    std::size_t lineno = 0;
    auto token = [&](const nlohmann::json& v, Field f) -> std::optional<TokenId> {
        if (v.is_null()) return std::nullopt;
        const auto id = vocab.find(v.get<std::string>());
        if (!id || vocab.token(*id).field != f)
            throw ParseError("jsonl", lineno, "unknown " + std::string(to_string(f)) + " token " + v.dump());
        return id;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Trajectory t;
            t.id = j.at("id").get<std::int64_t>();
            for (const auto& ev : j.at("events"))
                t.events.push_back({ev.at("t").get<double>(), token(ev.at("lab"), Field::Lab),
                                    token(ev.at("med"), Field::Med), ev.at("ae").get<bool>()});
            out.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("jsonl", lineno, e.what());
        }
    }
    return out;
}

}  // namespace kgsynth
