#pragma once

#include "aneusim/core.hpp"

namespace aneusim {

// Truncated Fourier series f(t) = sum_k A_k sin(2 pi f_k t + phase_k) + offset.
// Inlet velocity profiles are in cm/s, outlet pressure profiles in mmHg;
// conversion to internal units happens at the solver boundary.
struct WaveformSpec {
    struct Term {
        double amplitude = 0.0;
        double frequency = 0.0;  // Hz
        double phase = 0.0;      // rad
    };
    enum class Role { InletVelocity, OutletPressure };

    std::vector<Term> terms;
    double offset = 0.0;
    Role role = Role::InletVelocity;

    double eval(double t) const {
        double v = offset;
        for (const auto& term : terms)
            v += term.amplitude * std::sin(2.0 * M_PI * term.frequency * t + term.phase);
        return v;
    }
};

inline double waveform_eval(const WaveformSpec& w, double t) { return w.eval(t); }

// Physiologic presets; period T = 10/9 s.
constexpr double kCardiacPeriod = 10.0 / 9.0;

inline WaveformSpec preset_inlet_waveform() {
    WaveformSpec w;
    w.role = WaveformSpec::Role::InletVelocity;
    w.offset = 19.59;
    w.terms = {{-15.49, 0.89, -12.84}, {9.42, -1.78, -1.61}, {0.27, 18.44, -1.44}};
    return w;
}

inline WaveformSpec preset_outlet_waveform() {
    WaveformSpec w;
    w.role = WaveformSpec::Role::OutletPressure;
    w.offset = 75.07;
    w.terms = {{-30.44, 0.89, -13.19}, {2.96, -1.93, 0.50}, {1.39, 15.86, -2.01}};
    return w;
}

// Earliest time of the waveform maximum within [t0, t0 + period). Cycles are
// wall-clock windows, not signal periods.
inline double peak_time_in_cycle(const WaveformSpec& w, double t0, double period,
                                 int samples = 200000) {
    double best_t = t0, best_v = -1e300;
    for (int i = 0; i < samples; ++i) {
        double t = t0 + period * i / samples;
        double v = w.eval(t);
        if (v > best_v + 1e-12 * std::max(1.0, std::abs(best_v))) {
            best_v = v;
            best_t = t;
        }
    }
    return best_t;
}

inline double waveform_max_abs(const WaveformSpec& w, double period, int samples = 20000) {
    double m = 0.0;
    for (int i = 0; i < samples; ++i) m = std::max(m, std::abs(w.eval(period * i / samples)));
    return m;
}

}  // namespace aneusim
