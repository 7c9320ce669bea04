#include "vand/data.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vand/error.hpp"

namespace vand {

namespace {

using nlohmann::json;

Tensor matrix_from_json(const json& arr, const std::string& where) {
    if (!arr.is_array() || arr.empty()) throw IoError(where + ": expected a non-empty 2-D array");
    const int t = static_cast<int>(arr.size());
    if (!arr[0].is_array() || arr[0].empty()) {
        throw IoError(where + ": expected a non-empty 2-D array");
    }
    const int d = static_cast<int>(arr[0].size());
    Tensor out({t, d});
    for (int i = 0; i < t; ++i) {
        const json& row = arr[static_cast<size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != d) {
            throw IoError(where + ": ragged rows (row " + std::to_string(i) + ")");
        }
        for (int j = 0; j < d; ++j) {
            const json& cell = row[static_cast<size_t>(j)];
            if (!cell.is_number()) throw IoError(where + ": non-numeric entry");
            out.at(i, j) = cell.get<double>();
        }
    }
    return out;
}

json matrix_to_json(const Tensor& m) {
    json arr = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m.at(i, j));
        arr.push_back(std::move(row));
    }
    return arr;
}

} // namespace

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    Dataset out;
    std::string line;
    int lineno = 0;
    int x_dim = -1, y_dim = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IoError(where + ": malformed JSON (" + std::string(e.what()) + ")");
        }
        if (!obj.is_object() || !obj.contains("x") || !obj.contains("y")) {
            throw IoError(where + ": expected an object with 'x' and 'y'");
        }
        Trajectory traj;
        traj.id = obj.value("id", "traj_" + std::to_string(out.size()));
        traj.x = matrix_from_json(obj["x"], where + " x");
        traj.y = matrix_from_json(obj["y"], where + " y");
        if (traj.x.rows() != traj.y.rows()) {
            throw IoError(where + ": x and y lengths differ");
        }
        if (traj.steps() < 2) throw IoError(where + ": trajectory shorter than 2 steps");
        if (!traj.x.all_finite() || !traj.y.all_finite()) {
            throw IoError(where + ": non-finite values");
        }
        if (x_dim < 0) {
            x_dim = traj.x_dim();
            y_dim = traj.y_dim();
        } else if (traj.x_dim() != x_dim || traj.y_dim() != y_dim) {
            throw IoError(where + ": inconsistent dimensions (expected |X|=" +
                          std::to_string(x_dim) + ", |Y|=" + std::to_string(y_dim) + ")");
        }
        out.push_back(std::move(traj));
    }
    if (out.empty()) throw IoError(path + ": no trajectories");
    return out;
}

void save_dataset(const std::string& path, const Dataset& dataset) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset file: " + path);
    for (const Trajectory& traj : dataset) {
        json obj;
        obj["id"] = traj.id;
        obj["x"] = matrix_to_json(traj.x);
        obj["y"] = matrix_to_json(traj.y);
        out << obj.dump() << "\n";
    }
}

namespace {

void fit_columns(const Dataset& dataset, bool use_x, Tensor& mean, Tensor& std_out) {
    const Tensor& first = use_x ? dataset.front().x : dataset.front().y;
    const int d = first.cols();
    mean = Tensor::zeros({d});
    std_out = Tensor::zeros({d});
    int64_t n = 0;
    for (const Trajectory& traj : dataset) {
        const Tensor& m = use_x ? traj.x : traj.y;
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < d; ++j) mean[j] += m.at(i, j);
        n += m.rows();
    }
    for (int j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
    for (const Trajectory& traj : dataset) {
        const Tensor& m = use_x ? traj.x : traj.y;
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < d; ++j) {
                const double c = m.at(i, j) - mean[j];
                std_out[j] += c * c;
            }
    }
    for (int j = 0; j < d; ++j) {
        std_out[j] = std::sqrt(std_out[j] / static_cast<double>(n));
        if (std_out[j] < 1e-8) std_out[j] = 1e-8;
    }
}

} // namespace

NormStats fit_norm(const Dataset& dataset) {
    if (dataset.empty()) throw ValueError("fit_norm: empty dataset");
    NormStats s;
    fit_columns(dataset, true, s.x_mean, s.x_std);
    fit_columns(dataset, false, s.y_mean, s.y_std);
    return s;
}

Tensor apply_norm(const Tensor& rows, const Tensor& mean, const Tensor& std) {
    Tensor out = rows;
    const int d = rows.cols();
    for (int i = 0; i < rows.rows(); ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = (rows.at(i, j) - mean[j]) / std[j];
    return out;
}

Tensor invert_norm(const Tensor& rows, const Tensor& mean, const Tensor& std) {
    Tensor out = rows;
    const int d = rows.cols();
    for (int i = 0; i < rows.rows(); ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = rows.at(i, j) * std[j] + mean[j];
    return out;
}

Trajectory normalize_trajectory(const Trajectory& traj, const NormStats& stats) {
    Trajectory out;
    out.id = traj.id;
    out.x = apply_norm(traj.x, stats.x_mean, stats.x_std);
    out.y = apply_norm(traj.y, stats.y_mean, stats.y_std);
    return out;
}

Dataset normalize_dataset(const Dataset& dataset, const NormStats& stats) {
    Dataset out;
    out.reserve(dataset.size());
    for (const Trajectory& traj : dataset) out.push_back(normalize_trajectory(traj, stats));
    return out;
}

Trajectory augment_offset(const Trajectory& traj, RandomStream& rng) {
    const int t = traj.steps();
    if (t < 12) {
        throw ValueError("augment_offset: trajectory length " + std::to_string(t) +
                         " is below the minimum of 12");
    }
    const int start = rng.uniform_int(1, 10); // 1-based start step
    const int len = t - 10;
    Trajectory out;
    out.id = traj.id;
    out.x = Tensor({len, traj.x_dim()});
    out.y = Tensor({len, traj.y_dim()});
    for (int i = 0; i < len; ++i) {
        const int src = start - 1 + i;
        for (int j = 0; j < traj.x_dim(); ++j) out.x.at(i, j) = traj.x.at(src, j);
        for (int j = 0; j < traj.y_dim(); ++j) out.y.at(i, j) = traj.y.at(src, j);
    }
    return out;
}

Batch make_batch(const Dataset& dataset, int batch_size, RandomStream& rng) {
    if (batch_size < 1) throw ValueError("make_batch: batch_size must be >= 1");
    if (dataset.empty()) throw ValueError("make_batch: empty dataset");
    const int n = static_cast<int>(dataset.size());

    std::vector<Trajectory> views;
    views.reserve(static_cast<size_t>(batch_size));
    int t_common = -1;
    for (int b = 0; b < batch_size; ++b) {
        const int idx = rng.uniform_int(0, n - 1);
        Trajectory view = augment_offset(dataset[static_cast<size_t>(idx)], rng);
        if (t_common < 0 || view.steps() < t_common) t_common = view.steps();
        views.push_back(std::move(view));
    }

    const int dx = views.front().x_dim();
    const int dy = views.front().y_dim();
    Batch batch;
    batch.steps = t_common;
    batch.batch = batch_size;
    batch.x = Tensor({t_common, batch_size, dx});
    batch.y = Tensor({t_common, batch_size, dy});
    for (int t = 0; t < t_common; ++t) {
        for (int b = 0; b < batch_size; ++b) {
            const Trajectory& v = views[static_cast<size_t>(b)];
            for (int j = 0; j < dx; ++j)
                batch.x[(static_cast<int64_t>(t) * batch_size + b) * dx + j] = v.x.at(t, j);
            for (int j = 0; j < dy; ++j)
                batch.y[(static_cast<int64_t>(t) * batch_size + b) * dy + j] = v.y.at(t, j);
        }
    }
    return batch;
}

std::vector<Batch> make_batches(const Dataset& dataset, int batch_size, int count,
                                RandomStream& rng) {
    std::vector<Batch> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(make_batch(dataset, batch_size, rng));
    return out;
}

} // namespace vand
