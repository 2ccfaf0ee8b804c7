#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "tslab/rng.hpp"

// Epoch -> temperature schedules. The generalized cosine family covers the
// constant-temperature baseline (as a degenerate case), the regular cosine
// schedule (shift k=0, starts at tau+), and the negative cosine schedule
// (k=1, starts at tau- and rises). Step-up, half-wave and random schedules
// are ablation variants over the same [tau-, tau+] range.

namespace tslab {

enum class ScheduleKind { Const, GCos, Cos, NegCos, HalfNegCos, StepUp, Random };

inline const char* to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Const: return "const";
        case ScheduleKind::GCos: return "gcos";
        case ScheduleKind::Cos: return "cos";
        case ScheduleKind::NegCos: return "negcos";
        case ScheduleKind::HalfNegCos: return "halfnegcos";
        case ScheduleKind::StepUp: return "stepup";
        case ScheduleKind::Random: return "random";
    }
    return "?";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "const") return ScheduleKind::Const;
    if (s == "gcos") return ScheduleKind::GCos;
    if (s == "cos") return ScheduleKind::Cos;
    if (s == "negcos") return ScheduleKind::NegCos;
    if (s == "halfnegcos") return ScheduleKind::HalfNegCos;
    if (s == "stepup") return ScheduleKind::StepUp;
    if (s == "random") return ScheduleKind::Random;
    throw std::invalid_argument("unknown schedule kind: '" + s + "'");
}

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::Const;
    double tau_plus = 1.0;   // upper temperature
    double tau_minus = 1.0;  // lower temperature
    int period = 200;        // epochs per cosine period
    double shift = 0.0;      // phase delay k, in units of pi; meaningful for the gcos family
    int total_epochs = 600;
    int steps = 10;          // plateau count, step-up only
    std::uint64_t seed = 0;  // random only

    void validate() const {
        if (!(tau_plus > 0.0) || !(tau_minus > 0.0))
            throw std::invalid_argument("schedule: temperatures must be positive");
        if (tau_minus > tau_plus)
            throw std::invalid_argument("schedule: tau_minus must not exceed tau_plus");
        if (shift < 0.0 || shift > 1.0)
            throw std::invalid_argument("schedule: shift must be in [0, 1]");
        if (period < 1) throw std::invalid_argument("schedule: period must be >= 1");
        if (total_epochs < 1) throw std::invalid_argument("schedule: total_epochs must be >= 1");
        if (steps < 1) throw std::invalid_argument("schedule: steps must be >= 1");
    }
};

// Factories normalize the aliases: cos is gcos with k=0, negcos is gcos
// with k=1, const stores the single temperature in both bounds.

inline ScheduleSpec const_schedule(double tau, int total_epochs) {
    ScheduleSpec s;
    s.kind = ScheduleKind::Const;
    s.tau_plus = tau;
    s.tau_minus = tau;
    s.total_epochs = total_epochs;
    s.validate();
    return s;
}

inline ScheduleSpec gcos_schedule(double tau_plus, double tau_minus, int period, double shift,
                                  int total_epochs) {
    ScheduleSpec s;
    s.kind = ScheduleKind::GCos;
    s.tau_plus = tau_plus;
    s.tau_minus = tau_minus;
    s.period = period;
    s.shift = shift;
    s.total_epochs = total_epochs;
    s.validate();
    return s;
}

inline ScheduleSpec cos_schedule(double tau_plus, double tau_minus, int period, int total_epochs) {
    ScheduleSpec s = gcos_schedule(tau_plus, tau_minus, period, 0.0, total_epochs);
    s.kind = ScheduleKind::Cos;
    return s;
}

inline ScheduleSpec negcos_schedule(double tau_plus, double tau_minus, int period,
                                    int total_epochs) {
    ScheduleSpec s = gcos_schedule(tau_plus, tau_minus, period, 1.0, total_epochs);
    s.kind = ScheduleKind::NegCos;
    return s;
}

inline ScheduleSpec half_negcos_schedule(double tau_plus, double tau_minus, int period,
                                         int total_epochs) {
    ScheduleSpec s;
    s.kind = ScheduleKind::HalfNegCos;
    s.tau_plus = tau_plus;
    s.tau_minus = tau_minus;
    s.period = period;
    s.total_epochs = total_epochs;
    s.validate();
    return s;
}

inline ScheduleSpec stepup_schedule(double tau_plus, double tau_minus, int steps,
                                    int total_epochs) {
    ScheduleSpec s;
    s.kind = ScheduleKind::StepUp;
    s.tau_plus = tau_plus;
    s.tau_minus = tau_minus;
    s.steps = steps;
    s.total_epochs = total_epochs;
    s.validate();
    return s;
}

inline ScheduleSpec random_schedule(double tau_plus, double tau_minus, std::uint64_t seed,
                                    int total_epochs) {
    ScheduleSpec s;
    s.kind = ScheduleKind::Random;
    s.tau_plus = tau_plus;
    s.tau_minus = tau_minus;
    s.seed = seed;
    s.total_epochs = total_epochs;
    s.validate();
    return s;
}

// Temperature for a 1-indexed epoch. Epochs feed the cosine raw (no
// rebasing to zero), and the gcos clamp holds tau+ once
// epoch >= E - k*P/2, so a k=1 run ends on a flat high-temperature tail.
inline double temperature_at(const ScheduleSpec& spec, int epoch) {
    spec.validate();
    if (epoch < 1 || epoch > spec.total_epochs)
        throw std::domain_error("temperature_at: epoch " + std::to_string(epoch) +
                                " outside [1, " + std::to_string(spec.total_epochs) + "]");
    constexpr double kPi = 3.141592653589793238462643383279502884;
    const double lo = spec.tau_minus;
    const double hi = spec.tau_plus;
    switch (spec.kind) {
        case ScheduleKind::Const:
            return hi;
        case ScheduleKind::GCos:
        case ScheduleKind::Cos:
        case ScheduleKind::NegCos: {
            const double hold_from = static_cast<double>(spec.total_epochs) -
                                     spec.shift * static_cast<double>(spec.period) / 2.0;
            if (static_cast<double>(epoch) < hold_from) {
                const double phase =
                    2.0 * kPi * static_cast<double>(epoch) / static_cast<double>(spec.period) -
                    spec.shift * kPi;
                return lo + 0.5 * (hi - lo) * (1.0 + std::cos(phase));
            }
            return hi;
        }
        case ScheduleKind::HalfNegCos: {
            int r = epoch % spec.period;
            if (r == 0) r = spec.period;
            const double phase = kPi * static_cast<double>(r) / static_cast<double>(spec.period);
            return lo + 0.5 * (hi - lo) * (1.0 - std::cos(phase));
        }
        case ScheduleKind::StepUp: {
            // `steps` equal-length plateaus over [1, E], levels linearly
            // spaced lo..hi (a single plateau degenerates to lo).
            if (spec.steps == 1) return lo;
            const long long idx = static_cast<long long>(epoch - 1) * spec.steps /
                                  spec.total_epochs;
            const long long clamped = idx >= spec.steps ? spec.steps - 1 : idx;
            return lo + (hi - lo) * static_cast<double>(clamped) /
                            static_cast<double>(spec.steps - 1);
        }
        case ScheduleKind::Random: {
            std::uint64_t key = mix_key(spec.seed, rng_tag::kSchedule,
                                        static_cast<std::uint64_t>(epoch));
            const double u = static_cast<double>(key >> 11) * 0x1.0p-53;
            return lo + u * (hi - lo);
        }
    }
    throw std::logic_error("temperature_at: unhandled schedule kind");
}

}  // namespace tslab
