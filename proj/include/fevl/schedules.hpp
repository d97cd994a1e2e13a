#pragma once

#include <cstddef>
#include <vector>

namespace fevl {

enum class ScheduleKind { WarmupStep, WarmupCosine };

struct Schedule {
    ScheduleKind kind = ScheduleKind::WarmupCosine;
    double eta0 = 0.1;
    int warmup_steps = 0;
    int total_steps = 1;
    std::vector<int> step_milestones;  // strictly increasing
    double step_factor = 0.1;          // in (0,1)
};

// Learning rate at step t. Warmup ramps eta0*(t+1)/warmup_steps; cosine
// anneals to exactly 0 at the last post-warmup step; step decay multiplies by
// factor^(#milestones <= t).
double lr_at(const Schedule& s, int t);

// Smoothed one-hot: target 1-eps, others eps/(k-1).
std::vector<double> smooth_labels(int y, int k, double epsilon);

// ln((k-1)(1-eps)/eps): the target-vs-rest logit gap minimizing smoothed CE.
double ls_optimal_gap(double epsilon, int k);

}  // namespace fevl
