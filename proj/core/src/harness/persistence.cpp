#include "shc/harness/persistence.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace shc::harness {

namespace {

constexpr char kMagic[4] = {'S', 'H', 'C', '1'};

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    void matrix(const Matrix& m) {
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
    void header(FileKind kind, std::uint32_t horizon) {
        for (char ch : kMagic) bytes_.push_back(static_cast<std::uint8_t>(ch));
        u32(kFormatVersion);
        u32(static_cast<std::uint32_t>(kind));
        u32(horizon);
    }
    void write(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
        if (!out) throw std::runtime_error("failed writing " + path.string());
    }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path_);
        bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        return std::bit_cast<double>(v);
    }
    Matrix matrix(std::uint32_t rows, std::uint32_t cols) {
        need(static_cast<std::size_t>(rows) * cols * 8);
        Matrix m(rows, cols);
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
        return m;
    }
    /// Reads magic/version/kind and returns (kind, T).
    std::pair<FileKind, std::uint32_t> header() {
        need(4);
        if (std::memcmp(bytes_.data(), kMagic, 4) != 0) fail("bad magic");
        pos_ = 4;
        const auto version = u32();
        if (version != kFormatVersion) fail("unsupported version " + std::to_string(version));
        const auto kind = u32();
        if (kind > static_cast<std::uint32_t>(FileKind::Lambda)) fail("unknown kind " + std::to_string(kind));
        return {static_cast<FileKind>(kind), u32()};
    }
    void finish() const {
        if (pos_ != bytes_.size()) fail("trailing bytes");
    }
    [[noreturn]] void fail(const std::string& why) const { throw FormatError(path_ + ": " + why); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail("truncated file");
    }

    std::string path_;
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

// Guards against absurd sizes in a corrupted header before allocating.
constexpr std::uint32_t kMaxExtent = 1u << 20;

void check_extent(Reader& r, std::uint32_t v) {
    if (v > kMaxExtent) r.fail("dimension out of range");
}

}  // namespace

void save_basis(const std::filesystem::path& path, const manifolds::EmbeddingBasis& basis) {
    if (basis.temporal.size() != basis.per_layer.size() && !basis.temporal.empty())
        throw std::invalid_argument("temporal bases must be empty or cover every layer");
    const auto horizon = static_cast<std::uint32_t>(basis.per_layer.size());
    std::vector<std::optional<Matrix>> temporal = basis.temporal;
    temporal.resize(basis.per_layer.size());

    Writer w;
    w.header(static_cast<FileKind>(basis.channel), horizon);
    for (const auto& m : basis.per_layer) w.u8(m ? 1 : 0);
    for (const auto& m : temporal) w.u8(m ? 1 : 0);
    for (const auto& m : basis.per_layer) {
        w.u32(m ? static_cast<std::uint32_t>(m->rows()) : 0);
        w.u32(m ? static_cast<std::uint32_t>(m->cols()) : 0);
    }
    for (const auto& m : temporal) {
        w.u32(m ? static_cast<std::uint32_t>(m->rows()) : 0);
        w.u32(m ? static_cast<std::uint32_t>(m->cols()) : 0);
    }
    w.f64(basis.threshold);
    for (const auto& m : basis.per_layer)
        if (m) w.matrix(*m);
    for (const auto& m : temporal)
        if (m) w.matrix(*m);
    w.write(path);
}

manifolds::EmbeddingBasis load_basis(const std::filesystem::path& path) {
    Reader r(path);
    const auto [kind, horizon] = r.header();
    if (kind > FileKind::BasisD) r.fail("file does not hold an embedding basis");
    check_extent(r, horizon);

    std::vector<std::uint8_t> present(2 * static_cast<std::size_t>(horizon));
    for (auto& p : present) {
        p = r.u8();
        if (p > 1) r.fail("bad presence flag");
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(present.size());
    for (auto& [rows, cols] : shapes) {
        rows = r.u32();
        cols = r.u32();
        check_extent(r, rows);
        check_extent(r, cols);
    }

    manifolds::EmbeddingBasis basis;
    basis.channel = static_cast<manifolds::Channel>(kind);
    basis.threshold = r.f64();
    basis.per_layer.resize(horizon);
    basis.temporal.resize(horizon);
    for (std::size_t i = 0; i < present.size(); ++i) {
        if (!present[i]) continue;
        auto& slot = i < horizon ? basis.per_layer[i] : basis.temporal[i - horizon];
        slot = r.matrix(shapes[i].first, shapes[i].second);
    }
    r.finish();
    return basis;
}

void save_gains(const std::filesystem::path& path, const analytic::GainSchedule& gains) {
    gains.validate();
    Writer w;
    w.header(FileKind::Gains, static_cast<std::uint32_t>(gains.schedule.horizon()));
    w.u32(static_cast<std::uint32_t>(gains.bases.size()));
    for (const auto& b : gains.bases) {
        w.u32(static_cast<std::uint32_t>(b.rows()));
        w.u32(static_cast<std::uint32_t>(b.cols()));
    }
    w.f64(gains.schedule.c);
    for (double l : gains.schedule.lambdas) w.f64(l);
    for (const auto& b : gains.bases) w.matrix(b);
    w.write(path);
}

namespace {

analytic::LambdaSchedule read_lambdas(Reader& r, std::uint32_t horizon) {
    analytic::LambdaSchedule s;
    s.c = r.f64();
    s.lambdas.resize(static_cast<std::size_t>(horizon) + 1);
    for (auto& l : s.lambdas) l = r.f64();
    s.alphas.resize(horizon);
    for (std::size_t t = 0; t < horizon; ++t) s.alphas[t] = analytic::alpha_from(s.c, s.lambdas[t + 1]);
    return s;
}

}  // namespace

analytic::GainSchedule load_gains(const std::filesystem::path& path) {
    Reader r(path);
    const auto [kind, horizon] = r.header();
    if (kind != FileKind::Gains) r.fail("file does not hold a gain schedule");
    check_extent(r, horizon);
    const auto count = r.u32();
    check_extent(r, count);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(count);
    for (auto& [rows, cols] : shapes) {
        rows = r.u32();
        cols = r.u32();
        check_extent(r, rows);
        check_extent(r, cols);
    }
    analytic::GainSchedule g;
    g.schedule = read_lambdas(r, horizon);
    for (const auto& [rows, cols] : shapes) g.bases.push_back(r.matrix(rows, cols));
    r.finish();
    g.validate();
    return g;
}

void save_lambda(const std::filesystem::path& path, const analytic::LambdaSchedule& sched) {
    Writer w;
    w.header(FileKind::Lambda, static_cast<std::uint32_t>(sched.horizon()));
    w.f64(sched.c);
    for (double l : sched.lambdas) w.f64(l);
    w.write(path);
}

analytic::LambdaSchedule load_lambda(const std::filesystem::path& path) {
    Reader r(path);
    const auto [kind, horizon] = r.header();
    if (kind != FileKind::Lambda) r.fail("file does not hold a lambda schedule");
    check_extent(r, horizon);
    auto s = read_lambdas(r, horizon);
    r.finish();
    return s;
}

void check_basis_dim(const manifolds::EmbeddingBasis& basis, Index dim) {
    for (std::size_t t = 0; t < basis.per_layer.size(); ++t) {
        const auto& m = basis.per_layer[t];
        if (m && m->rows() != dim) {
            std::ostringstream os;
            os << "channel " << manifolds::to_string(basis.channel) << " basis at layer " << t << " has "
               << m->rows() << " rows but the stack dim is " << dim;
            throw DimensionError(os.str());
        }
    }
}

void check_gains_dim(const analytic::GainSchedule& gains, Index dim) {
    for (std::size_t t = 0; t < gains.bases.size(); ++t)
        if (gains.bases[t].rows() != dim) {
            std::ostringstream os;
            os << "gain basis at layer " << t << " has " << gains.bases[t].rows() << " rows but the stack dim is "
               << dim;
            throw DimensionError(os.str());
        }
}

}  // namespace shc::harness
