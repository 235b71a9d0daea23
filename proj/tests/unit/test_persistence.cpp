#include "shc/dynamics.hpp"
#include "shc/harness/persistence.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

namespace {

using namespace shc;
using namespace shc::harness;
using manifolds::Channel;
using manifolds::EmbeddingBasis;

class Persistence : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("shc_persist_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        std::filesystem::create_directories(dir_);
    }
    void TearDown() override { std::filesystem::remove_all(dir_); }

    std::filesystem::path path(const std::string& name) const { return dir_ / name; }

    static std::string bytes(const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }
    static void write(const std::filesystem::path& p, const std::string& data) {
        std::ofstream out(p, std::ios::binary);
        out << data;
    }

    std::filesystem::path dir_;
};

EmbeddingBasis derivative_basis() {
    EmbeddingBasis b;
    b.channel = Channel::D;
    b.threshold = 0.95;
    b.per_layer = {std::nullopt, dynamics::random_orthonormal_columns(6, 2, 1),
                   dynamics::random_orthonormal_columns(6, 3, 2)};
    b.temporal = {std::nullopt, Matrix::Identity(2, 1), Matrix::Identity(2, 2)};
    return b;
}

TEST_F(Persistence, BasisRoundTripIsExact) {
    const auto b = derivative_basis();
    save_basis(path("d.bin"), b);
    const auto back = load_basis(path("d.bin"));
    EXPECT_EQ(back, b);
    EXPECT_FALSE(back.has_layer(0));
    EXPECT_EQ(back.ranks(), (std::vector<Index>{-1, 2, 3}));
    EXPECT_EQ(bytes(path("d.bin")).substr(0, 4), "SHC1");
}

TEST_F(Persistence, GainAndLambdaRoundTrip) {
    const auto stack = dynamics::LinearStack::random_orthogonal(5, 3, 3);
    const analytic::GainSchedule g{dynamics::propagate_basis(stack, dynamics::random_orthonormal_columns(5, 2, 4)),
                                   analytic::lambda_schedule(0.7, 3)};
    save_gains(path("g.bin"), g);
    const auto gb = load_gains(path("g.bin"));
    ASSERT_EQ(gb.bases.size(), g.bases.size());
    for (std::size_t t = 0; t < g.bases.size(); ++t) EXPECT_EQ(gb.bases[t], g.bases[t]);
    EXPECT_EQ(gb.schedule.lambdas, g.schedule.lambdas);
    EXPECT_EQ(gb.schedule.alphas, g.schedule.alphas);
    EXPECT_EQ(gb.schedule.c, 0.7);

    save_lambda(path("l.bin"), g.schedule);
    const auto lb = load_lambda(path("l.bin"));
    EXPECT_EQ(lb.lambdas, g.schedule.lambdas);
    EXPECT_EQ(lb.alphas, g.schedule.alphas);
}

TEST_F(Persistence, RejectsBadMagic) {
    save_lambda(path("l.bin"), analytic::lambda_schedule(1.0, 2));
    auto data = bytes(path("l.bin"));
    data[0] = 'X';
    write(path("bad.bin"), data);
    EXPECT_THROW(load_lambda(path("bad.bin")), FormatError);
}

TEST_F(Persistence, RejectsTruncatedAndPaddedFiles) {
    save_basis(path("d.bin"), derivative_basis());
    const auto data = bytes(path("d.bin"));
    write(path("short.bin"), data.substr(0, data.size() - 3));
    EXPECT_THROW(load_basis(path("short.bin")), FormatError);
    write(path("long.bin"), data + "x");
    EXPECT_THROW(load_basis(path("long.bin")), FormatError);
    write(path("empty.bin"), "");
    EXPECT_THROW(load_basis(path("empty.bin")), FormatError);
}

TEST_F(Persistence, RejectsWrongKind) {
    save_lambda(path("l.bin"), analytic::lambda_schedule(1.0, 2));
    EXPECT_THROW(load_basis(path("l.bin")), FormatError);
    EXPECT_THROW(load_gains(path("l.bin")), FormatError);
    EXPECT_THROW(load_lambda(path("missing.bin")), std::runtime_error);
}

TEST_F(Persistence, DimensionCheckNamesTheLayer) {
    auto b = derivative_basis();
    EXPECT_NO_THROW(check_basis_dim(b, 6));
    b.per_layer[2] = Matrix::Identity(7, 1);
    try {
        check_basis_dim(b, 6);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
    }
    const analytic::GainSchedule g{{Matrix::Identity(4, 1), Matrix::Identity(3, 1)}, analytic::lambda_schedule(1.0, 1)};
    try {
        check_gains_dim(g, 4);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
    }
}

}  // namespace
