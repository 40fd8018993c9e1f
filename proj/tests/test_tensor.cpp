#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relcap/checkpoint.hpp"
#include "relcap/ops.hpp"
#include "relcap/tensor.hpp"
#include "support.hpp"

#include <cstdio>

using namespace relcap;
namespace O = relcap::ops;
using testsupport::urand;
using Mat = Matrix<double>;

TEST_CASE("matmul forward") {
    Tape<double> tape;
    Rng rng(7);

    SUBCASE("identity times X is X") {
        Mat x = urand(2, 5, rng);
        auto c = O::matmul(tape.constant(Mat::Identity(2, 2)), tape.constant(x));
        CHECK((c.value() - x).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("hand multiplication") {
        Mat a(2, 2), b(2, 1);
        a << 1, 2, 3, 4;
        b << 1, 1;
        auto c = O::matmul(tape.constant(a), tape.constant(b));
        CHECK(c.value()(0, 0) == doctest::Approx(3.0));
        CHECK(c.value()(1, 0) == doctest::Approx(7.0));
    }
    SUBCASE("shape mismatch names both shapes") {
        auto a = tape.constant(Mat::Zero(2, 3));
        auto b = tape.constant(Mat::Zero(4, 2));
        CHECK_THROWS_WITH_AS(O::matmul(a, b), doctest::Contains("[2x3]"), ValidationError);
        try {
            O::matmul(a, b);
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
        }
    }
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(21);
    auto fn = [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return O::matmul(in[0], in[1]);
    };
    double err = testsupport::max_grad_rel_err(fn, {urand(3, 4, rng), urand(4, 2, rng)}, rng);
    CHECK(err < 1e-6);
}

TEST_CASE("softmax") {
    Tape<double> tape;

    SUBCASE("uniform on equal logits") {
        Mat x(1, 4);
        x << 0, 0, 0, 0;
        auto y = O::softmax(tape.constant(x));
        for (int i = 0; i < 4; ++i) CHECK(y.value()(0, i) == doctest::Approx(0.25));
    }
    SUBCASE("stable at extreme logits") {
        Mat x(1, 2);
        x << 1000.0, 0.0;
        auto y = O::softmax(tape.constant(x));
        CHECK(std::abs(y.value()(0, 0) - 1.0) < 1e-12);
        CHECK(std::abs(y.value()(0, 1)) < 1e-12);
        CHECK(y.value().allFinite());
    }
    SUBCASE("closed form") {
        Mat x(1, 3);
        x << std::log(1.0), std::log(2.0), std::log(3.0);
        auto y = O::softmax(tape.constant(x));
        CHECK(y.value()(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
        CHECK(y.value()(0, 1) == doctest::Approx(2.0 / 6).epsilon(1e-12));
        CHECK(y.value()(0, 2) == doctest::Approx(3.0 / 6).epsilon(1e-12));
    }
    SUBCASE("slices sum to one on both axes") {
        Rng rng(3);
        Mat x = urand(5, 7, rng, -30, 30);
        auto yr = O::softmax(tape.constant(x), O::Axis::cols);
        auto yc = O::softmax(tape.constant(x), O::Axis::rows);
        for (int r = 0; r < 5; ++r) CHECK(std::abs(yr.value().row(r).sum() - 1.0) < 1e-9);
        for (int c = 0; c < 7; ++c) CHECK(std::abs(yc.value().col(c).sum() - 1.0) < 1e-9);
    }
}

TEST_CASE("elementwise basics") {
    Tape<double> tape;
    Mat x(1, 2);
    x << -3, 3;
    auto y = O::relu(tape.constant(x));
    CHECK(y.value()(0, 0) == 0.0);
    CHECK(y.value()(0, 1) == 3.0);

    Mat c = Mat::Constant(1, 6, 4.2);
    auto ln = O::layer_norm(tape.constant(c));
    CHECK(ln.value().cwiseAbs().maxCoeff() < 1e-6); // zero-variance handled by eps
}

TEST_CASE("per-op gradients vs finite differences") {
    Rng rng(11);
    auto check = [&](auto fn, std::vector<Mat> inputs, double tol = 1e-5) {
        double err = testsupport::max_grad_rel_err(fn, std::move(inputs), rng);
        CHECK(err < tol);
    };
    using TT = const std::vector<Tensor<double>>&;

    for (int rep = 0; rep < 5; ++rep) {
        check([](Tape<double>& t, TT in) { return O::add(in[0], in[1]); },
              {urand(3, 3, rng), urand(3, 3, rng)});
        check([](Tape<double>& t, TT in) { return O::sub(in[0], in[1]); },
              {urand(3, 3, rng), urand(3, 3, rng)});
        check([](Tape<double>& t, TT in) { return O::cwise_mul(in[0], in[1]); },
              {urand(3, 3, rng), urand(3, 3, rng)});
        check([](Tape<double>& t, TT in) { return O::add_rowvec(in[0], in[1]); },
              {urand(4, 3, rng), urand(1, 3, rng)});
        check([](Tape<double>& t, TT in) { return O::mul_rowvec(in[0], in[1]); },
              {urand(4, 3, rng), urand(1, 3, rng)});
        check([](Tape<double>& t, TT in) { return O::scalar_mul(in[0], 2.5); }, {urand(3, 3, rng)});
        check([](Tape<double>& t, TT in) { return O::relu(in[0]); }, {urand(4, 4, rng)});
        check([](Tape<double>& t, TT in) { return O::sigmoid(in[0]); }, {urand(4, 4, rng)});
        check([](Tape<double>& t, TT in) { return O::log(in[0]); }, {urand(3, 3, rng, 0.2, 2.0)});
        check([](Tape<double>& t, TT in) { return O::softmax(in[0], O::Axis::cols); },
              {urand(3, 5, rng)});
        check([](Tape<double>& t, TT in) { return O::softmax(in[0], O::Axis::rows); },
              {urand(3, 5, rng)});
        check([](Tape<double>& t, TT in) { return O::layer_norm(in[0]); }, {urand(3, 6, rng)});
        check([](Tape<double>& t, TT in) { return O::transpose(in[0]); }, {urand(3, 4, rng)});
        check([](Tape<double>& t, TT in) { return O::gather_rows(in[0], {2, 0, 2, 1}); },
              {urand(3, 4, rng)});
        check([](Tape<double>& t, TT in) { return O::concat<double>({in[0], in[1]}, O::Axis::cols); },
              {urand(3, 2, rng), urand(3, 4, rng)});
        check([](Tape<double>& t, TT in) { return O::concat<double>({in[0], in[1]}, O::Axis::rows); },
              {urand(2, 3, rng), urand(4, 3, rng)});
        check([](Tape<double>& t, TT in) { return O::slice(in[0], 1, 0, 2, 3); },
              {urand(4, 3, rng)});
        check([](Tape<double>& t, TT in) {
                  Mat mask = Mat::Zero(3, 3);
                  mask(0, 1) = 1;
                  mask(2, 2) = 1;
                  return O::masked_fill(in[0], mask, -5.0);
              },
              {urand(3, 3, rng)});
        check([](Tape<double>& t, TT in) {
                  return O::scatter(in[0], 3, 3,
                                    {{0, 1}, {2, 0}, {1, 1}}, 1.0);
              },
              {urand(3, 1, rng)});
        check([](Tape<double>& t, TT in) { return O::pick_per_row(in[0], {2, 0, 1}); },
              {urand(3, 4, rng)});
        check([](Tape<double>& t, TT in) { return O::sum(in[0]); }, {urand(3, 4, rng)});
    }
}

TEST_CASE("backward basics") {
    SUBCASE("sum gives ones") {
        Tape<double> tape;
        Parameter<double> w("w", Mat::Constant(3, 1, 2.0));
        auto loss = O::sum(tape.param(w));
        tape.backward(loss);
        CHECK(w.grad.isApprox(Mat::Ones(3, 1)));
    }
    SUBCASE("sum of squares") {
        Tape<double> tape;
        Mat v(3, 1);
        v << 1, 2, 3;
        Parameter<double> w("w", v);
        auto x = tape.param(w);
        tape.backward(O::sum(O::cwise_mul(x, x)));
        Mat expect(3, 1);
        expect << 2, 4, 6;
        CHECK(w.grad.isApprox(expect));
    }
    SUBCASE("non-scalar loss rejected") {
        Tape<double> tape;
        auto x = tape.input(Mat::Zero(2, 2), true);
        CHECK_THROWS_AS(tape.backward(x), ValidationError);
    }
    SUBCASE("repeated backward doubles grads") {
        Tape<double> tape;
        Parameter<double> w("w", Mat::Constant(2, 1, 3.0));
        auto x = tape.param(w);
        auto loss = O::sum(O::cwise_mul(x, x));
        tape.backward(loss);
        Mat first = w.grad;
        tape.backward(loss);
        CHECK(w.grad.isApprox(2.0 * first));
        CHECK(x.grad().isApprox(2.0 * first));
    }
    SUBCASE("non-participating parameter grad is exactly zero") {
        Tape<double> tape;
        Parameter<double> used("used", Mat::Constant(2, 1, 1.0));
        Parameter<double> unused("unused", Mat::Constant(2, 1, 1.0));
        auto a = tape.param(used);
        tape.param(unused);
        tape.backward(O::sum(a));
        CHECK(unused.grad.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("linearity of backward") {
    Rng rng(5);
    Mat wv = urand(3, 3, rng);
    auto run = [&](double a, double b) {
        Tape<double> tape;
        Parameter<double> w("w", wv);
        auto x = tape.param(w);
        auto f = O::sum(O::cwise_mul(x, x));
        auto g = O::sum(O::sigmoid(x));
        auto loss = O::add(O::scalar_mul(f, a), O::scalar_mul(g, b));
        tape.backward(loss);
        return Mat(w.grad);
    };
    Mat gf = run(1.0, 0.0);
    Mat gg = run(0.0, 1.0);
    Mat combo = run(2.5, -1.5);
    CHECK((combo - (2.5 * gf - 1.5 * gg)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward determinism for identical seeds") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tape<double> tape;
        auto a = tape.constant(urand(4, 4, rng));
        auto b = tape.constant(urand(4, 4, rng));
        auto out = O::softmax(O::matmul(O::sigmoid(a), b));
        return Mat(out.value());
    };
    Mat x = run(99), y = run(99);
    CHECK((x - y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Rng rng(13);
    Mat m = urand(5, 3, rng, -100, 100);
    Matrix<float> mf = m.cast<float>();

    Checkpoint ck;
    ck.put<double>("model", "w", m);
    ck.put<float>("model", "wf", mf);
    ck.put_scalar<double>("gmm", "m", 8.0);

    std::string path = "ckpt_roundtrip_test.bin";
    ck.save(path);
    Checkpoint back = Checkpoint::load(path);
    std::remove(path.c_str());

    Mat m2 = back.get<double>("model", "w");
    Matrix<float> mf2 = back.get<float>("model", "wf");
    CHECK(std::memcmp(m.data(), m2.data(), sizeof(double) * m.size()) == 0);
    CHECK(std::memcmp(mf.data(), mf2.data(), sizeof(float) * mf.size()) == 0);
    CHECK(back.get_scalar<double>("gmm", "m") == 8.0);
    CHECK_THROWS_AS(back.get<float>("model", "w"), ValidationError); // dtype mismatch
    CHECK_THROWS_AS(back.get<double>("model", "nope"), ValidationError);
}

TEST_CASE("float profile compiles and runs") {
    Tape<float> tape;
    Matrix<float> a(2, 2);
    a << 1, 2, 3, 4;
    Parameter<float> w("w", a);
    auto x = tape.param(w);
    auto loss = O::sum(O::cwise_mul(x, x));
    tape.backward(loss);
    CHECK(w.grad(1, 1) == doctest::Approx(8.0f));
}
