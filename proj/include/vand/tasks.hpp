#pragma once

#include <cstdint>
#include <string>

#include "vand/data.hpp"
#include "vand/rnn.hpp"

namespace vand {

enum class TaskKind { sequential, periodic };

const char* to_string(TaskKind kind);
TaskKind task_from_string(const std::string& name);

/// Default observation-noise standard deviations.
constexpr double kSequentialObsNoise = 0.01;
constexpr double kPeriodicObsNoise = 0.02;

/// The waypoint program shared by train and test sets unless overridden.
constexpr uint64_t kDefaultProgramSeed = 0xBadCafe;

struct TaskSpec {
    TaskKind kind = TaskKind::periodic;
    int steps = 600;
    int n_traj = 10;
    double obs_noise = -1.0; // <0 means the per-kind default
    uint64_t seed = 0;
    uint64_t program_seed = kDefaultProgramSeed; // sequential only
};

/// Long-horizon waypoint-following task (|X| = |Y| = 2). A point mass visits
/// 5 waypoints in [-1,1]^2 cyclically at speed 0.02/step with a 30-step dwell
/// at each; the waypoints are rejection-sampled until the path self-intersects,
/// so the correct command at the crossing is ambiguous without memory.
/// Observations are the noisy position, labels the clean unit command (zero
/// while dwelling). All trajectories share the clean path and differ in noise.
Dataset gen_sequential(int n_traj, int steps, uint64_t seed, double obs_noise = kSequentialObsNoise,
                       uint64_t program_seed = kDefaultProgramSeed);

/// Van der Pol limit-cycle task (mu = 1, RK4, dt = 0.05; |X| = |Y| = 2).
/// Initial states on an annulus around the cycle; observations are the noisy
/// state, labels the clean next-step increment.
Dataset gen_periodic(int n_traj, int steps, uint64_t seed, double obs_noise = kPeriodicObsNoise);

Dataset generate(const TaskSpec& spec);

/// One clean van der Pol RK4 step (exposed for oracle policies and tests).
void vdp_step(double& x, double& v);

/// Memoryless-predictor penalty: 1-nearest-neighbour regression on training
/// (x -> y) pairs versus an oracle that predicts the clean label for the phase
/// index. The sequential task is only accepted when the memoryless MSE is
/// at least twice the oracle MSE (and strictly positive).
struct AmbiguityReport {
    double memoryless_mse = 0.0;
    double oracle_mse = 0.0;
    bool holds() const {
        return memoryless_mse > 1e-12 && memoryless_mse >= 2.0 * oracle_mse;
    }
};

AmbiguityReport sequential_ambiguity(const Dataset& train, const Dataset& test);

/// Stateful closed-loop predictor.
class Policy {
public:
    virtual ~Policy() = default;
    virtual void reset() = 0;
    virtual Tensor predict(const Tensor& obs) = 0; // [D] -> [Y]
};

/// Wraps a trained model in inference mode.
class ModelPolicy : public Policy {
public:
    explicit ModelPolicy(StackedModel& model) : state_(model) {}
    void reset() override { state_.reset(); }
    Tensor predict(const Tensor& obs) override { return state_.step_raw(obs); }

private:
    InferenceState state_;
};

struct RolloutResult {
    Tensor states; // [n x D], states the policy was queried at
    Tensor preds;  // [n x Y]
    bool diverged = false;
    int recorded = 0;
};

/// Closed loop in inference mode. The policy is warmed up on the first
/// `prefix_steps` observations of `start`, then runs on its own predictions:
/// periodic advances state by the predicted increment, sequential moves the
/// position by 0.02 x the predicted command. Truncates and flags divergence on
/// a non-finite prediction or when the state leaves `divergence_bound`.
RolloutResult rollout(Policy& policy, TaskKind kind, int horizon, const Trajectory& start,
                      int prefix_steps, double divergence_bound = 1e3);

} // namespace vand
