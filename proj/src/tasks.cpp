#include "vand/tasks.hpp"

#include <cmath>
#include <limits>

#include "vand/error.hpp"

namespace vand {

const char* to_string(TaskKind kind) {
    return kind == TaskKind::sequential ? "sequential" : "periodic";
}

TaskKind task_from_string(const std::string& name) {
    if (name == "sequential") return TaskKind::sequential;
    if (name == "periodic") return TaskKind::periodic;
    throw ValueError("unknown task '" + name + "'; valid tasks: sequential, periodic");
}

// ---------------------------------------------------------------------------
// sequential task

namespace {

constexpr int kWaypoints = 5;
constexpr int kDwellSteps = 30;
constexpr double kSpeed = 0.02;

struct Point {
    double x = 0.0, y = 0.0;
};

double cross(const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool segments_cross(const Point& a, const Point& b, const Point& c, const Point& d) {
    const double d1 = cross(a, b, c);
    const double d2 = cross(a, b, d);
    const double d3 = cross(c, d, a);
    const double d4 = cross(c, d, b);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

bool path_self_intersects(const std::vector<Point>& w) {
    const int n = static_cast<int>(w.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            // skip adjacent segments of the cycle (they share an endpoint)
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (segments_cross(w[static_cast<size_t>(i)], w[static_cast<size_t>((i + 1) % n)],
                               w[static_cast<size_t>(j)], w[static_cast<size_t>((j + 1) % n)])) {
                return true;
            }
        }
    }
    return false;
}

std::vector<Point> draw_program(uint64_t program_seed) {
    RandomStream rng(mix_seed(program_seed, 0x5e9));
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<Point> w(kWaypoints);
        for (auto& p : w) {
            p.x = 2.0 * rng.uniform() - 1.0;
            p.y = 2.0 * rng.uniform() - 1.0;
        }
        if (path_self_intersects(w)) return w;
    }
    throw ValueError("gen_sequential: no self-intersecting waypoint path after 1000 tries");
}

// Clean positions and unit commands for the cyclic waypoint program.
void run_program(const std::vector<Point>& w, int steps, Tensor& pos, Tensor& cmd) {
    pos = Tensor({steps, 2});
    cmd = Tensor({steps, 2});
    Point p = w[0];
    int target = 1;
    int dwell = kDwellSteps;
    for (int t = 0; t < steps; ++t) {
        pos.at(t, 0) = p.x;
        pos.at(t, 1) = p.y;
        if (dwell > 0) {
            --dwell;
            cmd.at(t, 0) = 0.0;
            cmd.at(t, 1) = 0.0;
            continue;
        }
        const Point& goal = w[static_cast<size_t>(target)];
        const double dx = goal.x - p.x;
        const double dy = goal.y - p.y;
        const double dist = std::sqrt(dx * dx + dy * dy);
        const double ux = dx / dist;
        const double uy = dy / dist;
        cmd.at(t, 0) = ux;
        cmd.at(t, 1) = uy;
        if (dist <= kSpeed) {
            p = goal;
            target = (target + 1) % kWaypoints;
            dwell = kDwellSteps;
        } else {
            p.x += kSpeed * ux;
            p.y += kSpeed * uy;
        }
    }
}

Trajectory noisy_view(const Tensor& pos, const Tensor& cmd, double obs_noise, RandomStream& rng,
                      const std::string& id) {
    Trajectory traj;
    traj.id = id;
    traj.x = pos;
    traj.y = cmd;
    if (obs_noise > 0.0) {
        for (int64_t i = 0; i < traj.x.numel(); ++i) traj.x[i] += obs_noise * rng.normal();
    }
    return traj;
}

} // namespace

Dataset gen_sequential(int n_traj, int steps, uint64_t seed, double obs_noise,
                       uint64_t program_seed) {
    if (steps < 100) throw ValueError("gen_sequential: steps must be >= 100");
    if (n_traj < 1) throw ValueError("gen_sequential: n_traj must be >= 1");
    if (obs_noise < 0.0) obs_noise = kSequentialObsNoise;

    const std::vector<Point> program = draw_program(program_seed);
    Tensor pos, cmd;
    run_program(program, steps, pos, cmd);

    RandomStream root(seed);
    Dataset out;
    out.reserve(static_cast<size_t>(n_traj));
    for (int n = 0; n < n_traj; ++n) {
        RandomStream traj_rng = root.split(static_cast<uint64_t>(n));
        out.push_back(noisy_view(pos, cmd, obs_noise, traj_rng,
                                 "seq_" + std::to_string(seed) + "_" + std::to_string(n)));
    }

    // Generation-time ambiguity check against a held-out probe realization.
    RandomStream probe_rng = root.split(0xFFFFFFFFULL);
    Dataset probe{noisy_view(pos, cmd, obs_noise, probe_rng, "probe")};
    const AmbiguityReport report = sequential_ambiguity(out, probe);
    if (!report.holds()) {
        throw ValueError("gen_sequential: ambiguity check failed (memoryless MSE " +
                         std::to_string(report.memoryless_mse) + ", oracle MSE " +
                         std::to_string(report.oracle_mse) + ")");
    }
    return out;
}

// ---------------------------------------------------------------------------
// periodic task

namespace {

constexpr double kVdpMu = 1.0;
constexpr double kVdpDt = 0.05;

void vdp_deriv(double x, double v, double& dx, double& dv) {
    dx = v;
    dv = kVdpMu * (1.0 - x * x) * v - x;
}

} // namespace

void vdp_step(double& x, double& v) {
    double k1x, k1v, k2x, k2v, k3x, k3v, k4x, k4v;
    vdp_deriv(x, v, k1x, k1v);
    vdp_deriv(x + 0.5 * kVdpDt * k1x, v + 0.5 * kVdpDt * k1v, k2x, k2v);
    vdp_deriv(x + 0.5 * kVdpDt * k2x, v + 0.5 * kVdpDt * k2v, k3x, k3v);
    vdp_deriv(x + kVdpDt * k3x, v + kVdpDt * k3v, k4x, k4v);
    x += kVdpDt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    v += kVdpDt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
}

Dataset gen_periodic(int n_traj, int steps, uint64_t seed, double obs_noise) {
    if (steps < 100) throw ValueError("gen_periodic: steps must be >= 100");
    if (n_traj < 1) throw ValueError("gen_periodic: n_traj must be >= 1");
    if (obs_noise < 0.0) obs_noise = kPeriodicObsNoise;

    RandomStream root(seed);
    Dataset out;
    out.reserve(static_cast<size_t>(n_traj));
    for (int n = 0; n < n_traj; ++n) {
        RandomStream rng = root.split(static_cast<uint64_t>(n));
        const double angle = 6.283185307179586 * rng.uniform();
        const double radius = 1.0 + 2.0 * rng.uniform(); // annulus around the cycle
        double cx = radius * std::cos(angle);
        double cv = radius * std::sin(angle);

        // clean increments, then the observation path re-accumulated from them
        // so that with zero noise x(t+1) == x(t) + y(t) holds exactly
        Tensor incr({steps, 2});
        Tensor clean({steps, 2});
        double ax = cx, av = cv;
        for (int t = 0; t < steps; ++t) {
            clean.at(t, 0) = ax;
            clean.at(t, 1) = av;
            const double px = cx, pv = cv;
            vdp_step(cx, cv);
            incr.at(t, 0) = cx - px;
            incr.at(t, 1) = cv - pv;
            ax += incr.at(t, 0);
            av += incr.at(t, 1);
        }

        Trajectory traj;
        traj.id = "vdp_" + std::to_string(seed) + "_" + std::to_string(n);
        traj.y = incr;
        traj.x = clean;
        if (obs_noise > 0.0) {
            for (int64_t i = 0; i < traj.x.numel(); ++i) traj.x[i] += obs_noise * rng.normal();
        }
        out.push_back(std::move(traj));
    }
    return out;
}

Dataset generate(const TaskSpec& spec) {
    if (spec.kind == TaskKind::sequential) {
        return gen_sequential(spec.n_traj, spec.steps, spec.seed, spec.obs_noise,
                              spec.program_seed);
    }
    return gen_periodic(spec.n_traj, spec.steps, spec.seed, spec.obs_noise);
}

// ---------------------------------------------------------------------------
// oracles and rollout

AmbiguityReport sequential_ambiguity(const Dataset& train, const Dataset& test) {
    if (train.empty() || test.empty()) throw ValueError("sequential_ambiguity: empty dataset");
    const int dy = train.front().y_dim();

    AmbiguityReport report;
    int64_t count = 0;
    double nn_acc = 0.0, oracle_acc = 0.0;
    const Trajectory& reference = train.front();

    for (const Trajectory& probe : test) {
        for (int t = 0; t < probe.steps(); ++t) {
            // memoryless: 1-NN over all training (x, y) pairs
            double best = std::numeric_limits<double>::infinity();
            const Trajectory* best_traj = nullptr;
            int best_t = -1;
            for (const Trajectory& tr : train) {
                for (int s = 0; s < tr.steps(); ++s) {
                    double d = 0.0;
                    for (int j = 0; j < tr.x_dim(); ++j) {
                        const double c = tr.x.at(s, j) - probe.x.at(t, j);
                        d += c * c;
                    }
                    if (d < best) {
                        best = d;
                        best_traj = &tr;
                        best_t = s;
                    }
                }
            }
            const int ref_t = t < reference.steps() ? t : reference.steps() - 1;
            for (int j = 0; j < dy; ++j) {
                const double nn_err = best_traj->y.at(best_t, j) - probe.y.at(t, j);
                const double or_err = reference.y.at(ref_t, j) - probe.y.at(t, j);
                nn_acc += nn_err * nn_err;
                oracle_acc += or_err * or_err;
                ++count;
            }
        }
    }
    report.memoryless_mse = nn_acc / static_cast<double>(count);
    report.oracle_mse = oracle_acc / static_cast<double>(count);
    return report;
}

RolloutResult rollout(Policy& policy, TaskKind kind, int horizon, const Trajectory& start,
                      int prefix_steps, double divergence_bound) {
    if (horizon < 0) throw ValueError("rollout: horizon must be >= 0");
    if (prefix_steps < 1 || prefix_steps > start.steps()) {
        throw ValueError("rollout: prefix_steps out of range");
    }
    const int dx = start.x_dim();
    const double gain = kind == TaskKind::sequential ? kSpeed : 1.0;

    policy.reset();
    Tensor state({dx});
    Tensor pred;
    for (int k = 0; k < prefix_steps; ++k) {
        for (int j = 0; j < dx; ++j) state[j] = start.x.at(k, j);
        pred = policy.predict(state);
    }

    RolloutResult res;
    if (horizon == 0) {
        res.states = Tensor({1, dx});
        res.preds = Tensor({1, static_cast<int>(pred.numel())});
        res.recorded = 0;
        return res;
    }

    const int py = static_cast<int>(pred.numel());
    res.states = Tensor({horizon, dx});
    res.preds = Tensor({horizon, py});

    // advance off the last teacher-forced observation first
    for (int j = 0; j < dx && j < py; ++j) state[j] += gain * pred[j];

    int n = 0;
    for (int i = 0; i < horizon; ++i) {
        bool ok = true;
        for (int j = 0; j < dx; ++j) {
            if (!std::isfinite(state[j]) || std::fabs(state[j]) > divergence_bound) ok = false;
        }
        if (!ok) {
            res.diverged = true;
            break;
        }
        pred = policy.predict(state);
        if (!pred.all_finite()) {
            res.diverged = true;
            break;
        }
        for (int j = 0; j < dx; ++j) res.states.at(n, j) = state[j];
        for (int j = 0; j < py; ++j) res.preds.at(n, j) = pred[j];
        ++n;
        for (int j = 0; j < dx && j < py; ++j) state[j] += gain * pred[j];
    }
    res.recorded = n;
    return res;
}

} // namespace vand
