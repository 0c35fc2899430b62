#include "cholseq/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

namespace cholseq {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'Q', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void write_entry(std::ostream& os, const std::string& name, const Matrix& m) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(m.rows));
    write_u32(os, static_cast<uint32_t>(m.cols));
    os.write(reinterpret_cast<const char*>(m.data.data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
}

std::pair<std::string, Matrix> read_entry(std::istream& is) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rows = read_u32(is);
    const uint32_t cols = read_u32(is);
    Matrix m(static_cast<int>(rows), static_cast<int>(cols));
    is.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return {std::move(name), std::move(m)};
}

std::map<std::string, Matrix*> named_matrices(ModelParams& p) {
    std::map<std::string, Matrix*> out;
    for (Param* prm : p.params()) out[prm->id] = &prm->value;
    out["enc.run_mean1"] = &p.encoder.run_mean1;
    out["enc.run_var1"] = &p.encoder.run_var1;
    out["enc.run_mean2"] = &p.encoder.run_mean2;
    out["enc.run_var2"] = &p.encoder.run_var2;
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, ModelParams& params,
                     const std::optional<NormStats>& norm) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kVersion);

    Matrix meta(1, 5);
    meta.data = {static_cast<double>(params.dim), static_cast<double>(params.n_classes),
                 static_cast<double>(params.n_features),
                 static_cast<double>(params.encoder.hidden),
                 static_cast<double>(params.ode.hidden)};
    auto named = named_matrices(params);
    write_u32(os, static_cast<uint32_t>(named.size() + 1 + (norm ? 2 : 0)));
    write_entry(os, "meta.dims", meta);
    for (const auto& [name, m] : named) write_entry(os, name, *m);
    if (norm) {
        Matrix lo(1, static_cast<int>(norm->lo.size()));
        Matrix hi(1, static_cast<int>(norm->hi.size()));
        lo.data = norm->lo;
        hi.data = norm->hi;
        write_entry(os, "norm.lo", lo);
        write_entry(os, "norm.hi", hi);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    }
    const uint32_t version = read_u32(is);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const uint32_t n_entries = read_u32(is);

    std::map<std::string, Matrix> entries;
    for (uint32_t e = 0; e < n_entries; ++e) {
        auto [name, m] = read_entry(is);
        entries.emplace(std::move(name), std::move(m));
    }
    auto meta_it = entries.find("meta.dims");
    if (meta_it == entries.end() || meta_it->second.size() != 5) {
        throw std::runtime_error("checkpoint: missing model dimensions");
    }
    const Matrix& meta = meta_it->second;
    Rng rng = make_rng(0);
    ModelParams params = ModelParams::init(
        static_cast<int>(meta.data[2]), static_cast<int>(meta.data[0]),
        static_cast<int>(meta.data[3]), static_cast<int>(meta.data[4]),
        static_cast<int>(meta.data[1]), rng);

    for (auto& [name, dst] : named_matrices(params)) {
        auto it = entries.find(name);
        if (it == entries.end()) {
            throw std::runtime_error("checkpoint: missing entry '" + name + "'");
        }
        if (it->second.rows != dst->rows || it->second.cols != dst->cols) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        }
        *dst = std::move(it->second);
    }

    Checkpoint out{std::move(params), std::nullopt};
    auto lo = entries.find("norm.lo");
    auto hi = entries.find("norm.hi");
    if (lo != entries.end() && hi != entries.end()) {
        NormStats st;
        st.lo = lo->second.data;
        st.hi = hi->second.data;
        out.norm = std::move(st);
    }
    return out;
}

}  // namespace cholseq
