#include "toolflow/checkpoint.hpp"

#include "toolflow/errors.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace toolflow {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'C', 'K'};

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i64(std::ostream& out, std::int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_matrix(std::ostream& out, const Mat& m) {
    write_u64(out, static_cast<std::uint64_t>(m.rows()));
    write_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            write_f64(out, m(r, c));
        }
    }
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::int64_t read_i64(std::istream& in) {
    std::int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::string read_string(std::istream& in) {
    const std::uint64_t n = read_u64(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}
Mat read_matrix(std::istream& in) {
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = read_f64(in);
        }
    }
    return m;
}

template <typename Named>
void write_tensor_group(std::ostream& out, Named named) {
    write_u32(out, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, mat] : named) {
        write_string(out, name);
        write_matrix(out, *mat);
    }
}

template <typename Named>
void read_tensor_group(std::istream& in, Named named, const char* group) {
    const std::uint32_t count = read_u32(in);
    if (count != named.size()) {
        throw VersionMismatch(std::string("checkpoint ") + group + " tensor count mismatch");
    }
    for (auto& [name, mat] : named) {
        const std::string stored = read_string(in);
        if (stored != name) {
            throw VersionMismatch("checkpoint tensor '" + stored + "' does not match expected '" +
                                  name + "'");
        }
        *mat = read_matrix(in);
    }
}

}  // namespace

std::string Checkpoint::id() const {
    return hex64(graph_fingerprint) + "-" + std::to_string(train.global_step);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw SinkUnavailable("cannot open checkpoint file '" + path + "' for writing");
    }
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kCheckpointVersion);
    write_u64(out, ckpt.graph_fingerprint);

    write_tensor_group(out, ckpt.train.params.named());
    write_i64(out, ckpt.train.opt.step);
    write_f64(out, ckpt.train.opt.weight_decay);
    write_tensor_group(out, ckpt.train.opt.m.named());
    write_tensor_group(out, ckpt.train.opt.v.named());

    write_f64(out, ckpt.train.baseline.value);
    write_f64(out, ckpt.train.baseline.decay);
    write_i64(out, ckpt.train.global_step);
    write_u32(out, static_cast<std::uint32_t>(ckpt.train.phase));
    write_i64(out, ckpt.train.step_in_phase);

    std::ostringstream rng_state;
    rng_state << ckpt.train.rng;
    write_string(out, rng_state.str());

    if (!out) {
        throw SinkUnavailable("failed while writing checkpoint file '" + path + "'");
    }
}

Checkpoint load_checkpoint(const std::string& path, const SupernetGraph& graph) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open checkpoint file '" + path + "'");
    }
    char magic[4] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw VersionMismatch("file '" + path + "' is not a checkpoint");
    }
    const std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion) {
        throw VersionMismatch("checkpoint version " + std::to_string(version) +
                              " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }

    Checkpoint ckpt;
    ckpt.graph_fingerprint = read_u64(in);
    if (ckpt.graph_fingerprint != graph.fingerprint()) {
        throw GraphFingerprintMismatch("checkpoint was trained on a different graph (stored " +
                                       hex64(ckpt.graph_fingerprint) + ", current " +
                                       hex64(graph.fingerprint()) + ")");
    }

    read_tensor_group(in, ckpt.train.params.named(), "parameter");
    ckpt.train.opt.step = read_i64(in);
    ckpt.train.opt.weight_decay = read_f64(in);
    read_tensor_group(in, ckpt.train.opt.m.named(), "first-moment");
    read_tensor_group(in, ckpt.train.opt.v.named(), "second-moment");

    ckpt.train.baseline.value = read_f64(in);
    ckpt.train.baseline.decay = read_f64(in);
    ckpt.train.global_step = read_i64(in);
    ckpt.train.phase = static_cast<int>(read_u32(in));
    ckpt.train.step_in_phase = read_i64(in);

    std::istringstream rng_state(read_string(in));
    rng_state >> ckpt.train.rng;

    if (!in) {
        throw VersionMismatch("checkpoint file '" + path + "' is truncated");
    }
    if (ckpt.train.params.head.action_count() != graph.action_count()) {
        throw GraphFingerprintMismatch(
            "checkpoint action-table width does not match the current graph");
    }
    return ckpt;
}

}  // namespace toolflow
