#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "test_util.hpp"
#include "vand/data.hpp"
#include "vand/error.hpp"

using namespace vand;

namespace {

Dataset tiny_dataset(int n, int steps, uint64_t seed) {
    RandomStream rng(seed);
    Dataset out;
    for (int i = 0; i < n; ++i) {
        Trajectory traj;
        traj.id = "t" + std::to_string(i);
        traj.x = test_util::random_signed({steps, 2}, rng, 0.0, 1.0);
        traj.y = test_util::random_signed({steps, 3}, rng, 0.0, 1.0);
        out.push_back(std::move(traj));
    }
    return out;
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("save/load round-trips bit-exactly") {
    TempFile file("test_data_roundtrip.jsonl");
    Dataset original = tiny_dataset(3, 20, 7);
    original[0].x.at(0, 0) = 0.1 + 0.2; // a value with a long decimal expansion
    save_dataset(file.path, original);
    Dataset loaded = load_dataset(file.path);
    REQUIRE(loaded.size() == original.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].id == original[i].id);
        CHECK(test_util::bitwise_equal(loaded[i].x, original[i].x));
        CHECK(test_util::bitwise_equal(loaded[i].y, original[i].y));
    }
}

TEST_CASE("empty and malformed files are rejected with positions") {
    TempFile file("test_data_bad.jsonl");
    {
        std::ofstream out(file.path);
    }
    CHECK_THROWS_WITH_AS((void)load_dataset(file.path), doctest::Contains("no trajectories"),
                         IoError);
    {
        std::ofstream out(file.path);
        out << R"({"id":"a","x":[[1,2],[3,4]],"y":[[1],[2]]})" << "\n";
        out << "this is not json\n";
    }
    try {
        (void)load_dataset(file.path);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
}

TEST_CASE("inconsistent dimensions across lines are rejected") {
    TempFile file("test_data_dims.jsonl");
    {
        std::ofstream out(file.path);
        out << R"({"id":"a","x":[[1,2],[3,4]],"y":[[1],[2]]})" << "\n";
        out << R"({"id":"b","x":[[1,2,3],[4,5,6]],"y":[[1],[2]]})" << "\n";
    }
    CHECK_THROWS_AS((void)load_dataset(file.path), IoError);
}

TEST_CASE("x/y length mismatch inside a record is rejected") {
    TempFile file("test_data_len.jsonl");
    {
        std::ofstream out(file.path);
        out << R"({"id":"a","x":[[1,2],[3,4],[5,6]],"y":[[1],[2]]})" << "\n";
    }
    CHECK_THROWS_AS((void)load_dataset(file.path), IoError);
}

TEST_CASE("normalization statistics") {
    Dataset data = tiny_dataset(4, 50, 9);
    NormStats stats = fit_norm(data);

    SUBCASE("normalized data has near-zero mean") {
        Dataset normed = normalize_dataset(data, stats);
        const int dx = data.front().x_dim();
        std::vector<double> mean(static_cast<size_t>(dx), 0.0);
        int64_t count = 0;
        for (const auto& traj : normed) {
            for (int t = 0; t < traj.steps(); ++t)
                for (int j = 0; j < dx; ++j) mean[static_cast<size_t>(j)] += traj.x.at(t, j);
            count += traj.steps();
        }
        for (int j = 0; j < dx; ++j) {
            CHECK(std::fabs(mean[static_cast<size_t>(j)] / static_cast<double>(count)) < 1e-10);
        }
    }
    SUBCASE("apply then invert is the identity") {
        const Tensor& x = data[1].x;
        Tensor there = apply_norm(x, stats.x_mean, stats.x_std);
        Tensor back = invert_norm(there, stats.x_mean, stats.x_std);
        for (int64_t i = 0; i < x.numel(); ++i) {
            CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-12));
        }
    }
    SUBCASE("constant dimensions are floored, normalized values zero") {
        Dataset flat = tiny_dataset(1, 30, 10);
        for (int t = 0; t < 30; ++t) flat[0].x.at(t, 0) = 3.25;
        NormStats s = fit_norm(flat);
        CHECK(s.x_std[0] == 1e-8);
        Tensor normed = apply_norm(flat[0].x, s.x_mean, s.x_std);
        for (int t = 0; t < 30; ++t) CHECK(normed.at(t, 0) == 0.0);
    }
}

TEST_CASE("augment_offset geometry") {
    Dataset data = tiny_dataset(1, 600, 11);
    RandomStream rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        Trajectory view = augment_offset(data[0], rng);
        CHECK(view.steps() == 590);
        // the view must be a contiguous window starting at step s in {1..10}
        bool matched = false;
        for (int start = 0; start < 10 && !matched; ++start) {
            if (view.x.at(0, 0) == data[0].x.at(start, 0) &&
                view.x.at(589, 0) == data[0].x.at(start + 589, 0)) {
                matched = true;
            }
        }
        CHECK(matched);
    }
}

TEST_CASE("augment_offset rejects short trajectories") {
    Dataset data = tiny_dataset(1, 11, 12);
    RandomStream rng(3);
    CHECK_THROWS_AS((void)augment_offset(data[0], rng), ValueError);
}

TEST_CASE("offset distribution is uniform over 1..10") {
    Dataset data = tiny_dataset(1, 40, 13);
    RandomStream rng(17);
    const int n = 10000;
    std::vector<int> counts(10, 0);
    for (int rep = 0; rep < n; ++rep) {
        Trajectory view = augment_offset(data[0], rng);
        for (int start = 0; start < 10; ++start) {
            if (view.x.at(0, 0) == data[0].x.at(start, 0)) {
                ++counts[static_cast<size_t>(start)];
                break;
            }
        }
    }
    const double tol = 3.0 * std::sqrt(0.1 * 0.9 / n);
    for (int s = 0; s < 10; ++s) {
        CHECK(std::fabs(counts[static_cast<size_t>(s)] / static_cast<double>(n) - 0.1) < tol);
    }
}

TEST_CASE("batches stack time-major with replacement") {
    Dataset data = tiny_dataset(3, 30, 14);
    RandomStream rng(5);
    Batch batch = make_batch(data, 7, rng);
    CHECK(batch.steps == 20);
    CHECK(batch.batch == 7);
    CHECK(batch.x.shape() == std::vector<int>{20, 7, 2});
    CHECK(batch.y.shape() == std::vector<int>{20, 7, 3});

    SUBCASE("single-element batch is one augmented trajectory") {
        RandomStream r(6);
        Batch single = make_batch(data, 1, r);
        CHECK(single.batch == 1);
        CHECK(single.steps == 20);
    }
    SUBCASE("fixed seed reproduces the batch bitwise") {
        RandomStream r1(8), r2(8);
        Batch b1 = make_batch(data, 5, r1);
        Batch b2 = make_batch(data, 5, r2);
        CHECK(test_util::bitwise_equal(b1.x, b2.x));
        CHECK(test_util::bitwise_equal(b1.y, b2.y));
    }
}

TEST_CASE("sampling with replacement covers the dataset when B > N") {
    Dataset data = tiny_dataset(2, 30, 15);
    for (int t = 0; t < 30; ++t) {
        for (int j = 0; j < 2; ++j) {
            data[0].x.at(t, j) = 1.0 + t * 0.01; // strictly positive
            data[1].x.at(t, j) = -1.0 - t * 0.01; // strictly negative
        }
    }
    RandomStream rng(9);
    Batch batch = make_batch(data, 50, rng);
    int saw_first = 0, saw_second = 0;
    for (int b = 0; b < 50; ++b) {
        const double v = batch.x[(0 * 50 + b) * 2];
        if (v > 0.0) ++saw_first;
        if (v < 0.0) ++saw_second;
    }
    CHECK(saw_first + saw_second == 50);  // every slot mapped to a source
    CHECK(saw_first >= 10);               // ~25 in expectation for each
    CHECK(saw_second >= 10);
    CHECK(make_batches(data, 4, 3, rng).size() == 3);
}
