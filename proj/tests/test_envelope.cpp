#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace impulse;

namespace {

std::vector<double> brute(const std::vector<Point>& pts) {
    std::vector<double> out(pts.size(), -inf_v);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j)
            for (std::size_t k = i; k < pts.size(); ++k) {
                const double v = j == k ? pts[i].v
                                        : pts[j].v + (pts[i].y - pts[j].y) / (pts[k].y - pts[j].y) * (pts[k].v - pts[j].v);
                out[i] = std::max(out[i], v);
            }
    return out;
}

} // namespace

TEST(Envelope, CollinearUnchanged) {
    std::vector<Point> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({double(i), 2.0 * i - 1.0});
    const auto env = concave_envelope(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_DOUBLE_EQ(env[i], pts[i].v);
}

TEST(Envelope, SpikeLiftsNeighbours) {
    const std::vector<Point> pts{{0, 0}, {1, 0}, {2, 4}, {3, 0}, {4, 0}};
    const auto env = concave_envelope(pts);
    const std::vector<double> want{0, 2, 4, 2, 0};
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_DOUBLE_EQ(env[i], want[i]);
}

TEST(Envelope, PinOnTheLeft) {
    const std::vector<Point> pts{{1, -1}, {2, 1}, {3, 0}};
    const auto env = concave_envelope(pts, Point{0, -1});
    EXPECT_DOUBLE_EQ(env[0], 0.0);
    EXPECT_DOUBLE_EQ(env[1], 1.0);
    EXPECT_DOUBLE_EQ(env[2], 0.0);
}

TEST(Envelope, InvalidInput) {
    EXPECT_THROW(concave_envelope({{0, 1}}), std::invalid_argument);
    EXPECT_THROW(concave_envelope({{1, 0}, {0, 1}}), std::invalid_argument);
    EXPECT_THROW(concave_envelope({{0, 0}, {1, 1}}, Point{0.5, 0}), std::invalid_argument);
    EXPECT_NO_THROW(concave_envelope({{1, 0}}, Point{0, 0}));
}

TEST(EnvelopeProperty, MatchesBruteForce) {
    impulse::test::Gen gen(31);
    for (int inst = 0; inst < 100; ++inst) {
        const int n = gen.integer(2, 80);
        std::vector<Point> pts;
        double y = gen.uniform(-5.0, 5.0);
        for (int i = 0; i < n; ++i) {
            y += gen.uniform(0.01, 1.0);
            const double base = inst % 3 == 0 ? -0.1 * y * y : (inst % 3 == 1 ? std::sin(y) : 0.0);
            pts.push_back({y, base + gen.uniform(-2.0, 2.0)});
        }
        std::optional<Point> pin;
        if (gen.coin()) pin = Point{pts.front().y - gen.uniform(0.1, 2.0), gen.uniform(-2.0, 2.0)};
        const auto env = concave_envelope(pts, pin);
        auto all = pts;
        if (pin) all.insert(all.begin(), *pin);
        const auto ref = brute(all);
        const std::size_t off = pin ? 1 : 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            EXPECT_NEAR(env[i], ref[i + off], 1e-10 * std::max(1.0, std::fabs(ref[i + off]))) << inst;
            EXPECT_GE(env[i], pts[i].v);
        }
    }
}
