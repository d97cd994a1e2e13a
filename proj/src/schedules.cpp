#include "fevl/schedules.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fevl {

double lr_at(const Schedule& s, int t) {
    if (s.warmup_steps < 0 || s.warmup_steps >= s.total_steps)
        throw std::invalid_argument("lr_at: need 0 <= warmup_steps < total_steps");
    for (std::size_t i = 1; i < s.step_milestones.size(); ++i)
        if (s.step_milestones[i] <= s.step_milestones[i - 1])
            throw std::invalid_argument("lr_at: milestones must be strictly increasing");
    // t == total_steps is allowed so the cosine visibly reaches 0.
    if (t < 0 || t > s.total_steps)
        throw std::invalid_argument("lr_at: step " + std::to_string(t) + " out of range");

    if (t < s.warmup_steps)
        return s.eta0 * static_cast<double>(t + 1) / static_cast<double>(s.warmup_steps);

    if (s.kind == ScheduleKind::WarmupCosine) {
        const double tp = static_cast<double>(t - s.warmup_steps);
        const double Tp = static_cast<double>(s.total_steps - s.warmup_steps);
        return s.eta0 * 0.5 * (1.0 + std::cos(3.141592653589793238462643 * tp / Tp));
    }

    if (s.step_factor <= 0.0 || s.step_factor >= 1.0)
        throw std::invalid_argument("lr_at: step_factor must be in (0,1)");
    int hits = 0;
    for (int m : s.step_milestones)
        if (m <= t) ++hits;
    return s.eta0 * std::pow(s.step_factor, hits);
}

std::vector<double> smooth_labels(int y, int k, double epsilon) {
    if (epsilon < 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("smooth_labels: epsilon must be in [0,1)");
    if (y < 0 || y >= k) throw std::invalid_argument("smooth_labels: y out of range");
    if (k < 2 && epsilon > 0.0)
        throw std::invalid_argument("smooth_labels: smoothing needs k >= 2");
    std::vector<double> q(k, epsilon > 0.0 ? epsilon / static_cast<double>(k - 1) : 0.0);
    q[y] = 1.0 - epsilon;
    return q;
}

double ls_optimal_gap(double epsilon, int k) {
    if (epsilon <= 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("ls_optimal_gap: epsilon must be in (0,1)");
    if (k < 2) throw std::invalid_argument("ls_optimal_gap: k must be >= 2");
    return std::log(static_cast<double>(k - 1) * (1.0 - epsilon) / epsilon);
}

}  // namespace fevl
