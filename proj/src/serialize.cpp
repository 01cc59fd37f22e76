#include "ponwatch/serialize.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace ponwatch {

namespace {

constexpr char kMagic[6] = {'P', 'O', 'N', 'D', 'S', '1'};
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("dataset file: truncated");
    return v;
}

struct DatasetHeader {
    std::uint32_t kind = 0;
    std::uint64_t count = 0;
    std::uint64_t digest = 0;
    std::uint64_t seed = 0;
};

void write_header(std::ostream& out, const DatasetHeader& h) {
    out.write(kMagic, sizeof(kMagic));
    put(out, kDatasetVersion);
    put(out, h.kind);
    put(out, h.count);
    put(out, h.digest);
    put(out, h.seed);
}

DatasetHeader read_header(std::istream& in, const std::string& path) {
    char magic[6];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a PONDS1 dataset file: " + path);
    auto version = get<std::uint32_t>(in);
    if (version != kDatasetVersion)
        throw std::runtime_error("unsupported dataset version in " + path);
    DatasetHeader h;
    h.kind = get<std::uint32_t>(in);
    h.count = get<std::uint64_t>(in);
    h.digest = get<std::uint64_t>(in);
    h.seed = get<std::uint64_t>(in);
    return h;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode) {
    std::ofstream f(path, mode);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    return f;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode) {
    std::ifstream f(path, mode);
    if (!f) throw std::runtime_error("cannot open file: " + path);
    return f;
}

std::string hex_doubles(const double* data, std::size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(n * 16);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &data[i], sizeof(bits));
        for (int shift = 60; shift >= 0; shift -= 4)
            out.push_back(digits[(bits >> shift) & 0xf]);
    }
    return out;
}

void unhex_doubles(const std::string& hex, double* data, std::size_t n) {
    if (hex.size() != n * 16)
        throw std::runtime_error("checkpoint: parameter block length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (std::size_t k = 0; k < 16; ++k) {
            char c = hex[i * 16 + k];
            int d;
            if (c >= '0' && c <= '9') d = c - '0';
            else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
            else throw std::runtime_error("checkpoint: bad hex digit");
            bits = (bits << 4) | static_cast<std::uint64_t>(d);
        }
        std::memcpy(&data[i], &bits, sizeof(bits));
    }
}

void write_params(std::ostream& out, nn::ParamRefs& refs) {
    for (std::size_t i = 0; i < refs.mats.size(); ++i) {
        const auto& m = *refs.mats[i];
        out << "param m" << i << " " << m.rows() << " " << m.cols() << "\n";
        out << hex_doubles(m.data(), static_cast<std::size_t>(m.size())) << "\n";
    }
    for (std::size_t i = 0; i < refs.vecs.size(); ++i) {
        const auto& v = *refs.vecs[i];
        out << "param v" << i << " " << v.size() << " 1\n";
        out << hex_doubles(v.data(), static_cast<std::size_t>(v.size())) << "\n";
    }
}

void read_params(std::istream& in, nn::ParamRefs& refs) {
    std::string line;
    auto read_block = [&](double* data, long rows, long cols) {
        if (!std::getline(in, line))
            throw std::runtime_error("checkpoint: truncated");
        std::istringstream hdr(line);
        std::string tag, name;
        long r, c;
        hdr >> tag >> name >> r >> c;
        if (tag != "param" || r != rows || c != cols)
            throw std::runtime_error("checkpoint: parameter manifest mismatch");
        if (!std::getline(in, line))
            throw std::runtime_error("checkpoint: truncated");
        unhex_doubles(line, data, static_cast<std::size_t>(rows * cols));
    };
    for (auto* m : refs.mats) read_block(m->data(), m->rows(), m->cols());
    for (auto* v : refs.vecs) read_block(v->data(), v->size(), 1);
}

std::string provenance(std::uint64_t seed, std::uint64_t digest) {
    std::ostringstream out;
    out << "# ponwatch v1 seed=" << seed << " digest=" << std::hex
        << std::setw(16) << std::setfill('0') << digest << "\n";
    return out.str();
}

}  // namespace

void save_dataset(const NetworkDataset& ds, const std::string& path) {
    auto f = open_out(path, std::ios::binary);
    DatasetHeader h{0, ds.records.size(), ds.config_digest, ds.seed};
    write_header(f, h);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        if (r.values.size() != kNetworkSeqLen)
            throw std::runtime_error("save_dataset: bad record length");
        put(f, static_cast<std::uint8_t>(ds.split.empty() ? kTrain : ds.split[i]));
        put(f, static_cast<std::int32_t>(r.label));
        put(f, r.pnr_db);
        f.write(reinterpret_cast<const char*>(r.values.data()),
                static_cast<std::streamsize>(kNetworkSeqLen * sizeof(double)));
    }
}

void save_dataset(const WindowDataset& ds, const std::string& path) {
    auto f = open_out(path, std::ios::binary);
    DatasetHeader h{1, ds.records.size(), ds.config_digest, ds.seed};
    write_header(f, h);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        if (r.values.size() != kWindowLen)
            throw std::runtime_error("save_dataset: bad record length");
        put(f, static_cast<std::uint8_t>(ds.split.empty() ? kTrain : ds.split[i]));
        put(f, static_cast<std::int32_t>(r.event_class));
        put(f, r.pnr_db);
        put(f, static_cast<std::uint64_t>(r.abs_start));
        put(f, r.positions[0]);
        put(f, r.positions[1]);
        put(f, r.levels[0]);
        put(f, r.levels[1]);
        put(f, static_cast<std::uint8_t>(r.target_mask[0]));
        put(f, static_cast<std::uint8_t>(r.target_mask[1]));
        f.write(reinterpret_cast<const char*>(r.values.data()),
                static_cast<std::streamsize>(kWindowLen * sizeof(double)));
    }
}

int peek_dataset_kind(const std::string& path) {
    auto f = open_in(path, std::ios::binary);
    return static_cast<int>(read_header(f, path).kind);
}

NetworkDataset load_network_dataset(const std::string& path) {
    auto f = open_in(path, std::ios::binary);
    DatasetHeader h = read_header(f, path);
    if (h.kind != 0)
        throw std::runtime_error("expected a network dataset: " + path);
    NetworkDataset ds;
    ds.config_digest = h.digest;
    ds.seed = h.seed;
    for (std::uint64_t i = 0; i < h.count; ++i) {
        auto tag = get<std::uint8_t>(f);
        NetworkSample r;
        r.label = get<std::int32_t>(f);
        r.pnr_db = get<double>(f);
        r.values.resize(kNetworkSeqLen);
        f.read(reinterpret_cast<char*>(r.values.data()),
               static_cast<std::streamsize>(kNetworkSeqLen * sizeof(double)));
        if (!f) throw std::runtime_error("dataset file: truncated");
        ds.records.push_back(std::move(r));
        ds.split.push_back(static_cast<SplitTag>(tag));
    }
    return ds;
}

WindowDataset load_window_dataset(const std::string& path) {
    auto f = open_in(path, std::ios::binary);
    DatasetHeader h = read_header(f, path);
    if (h.kind != 1)
        throw std::runtime_error("expected a window dataset: " + path);
    WindowDataset ds;
    ds.config_digest = h.digest;
    ds.seed = h.seed;
    for (std::uint64_t i = 0; i < h.count; ++i) {
        auto tag = get<std::uint8_t>(f);
        WindowSample r;
        r.event_class = get<std::int32_t>(f);
        r.pnr_db = get<double>(f);
        r.abs_start = get<std::uint64_t>(f);
        r.positions[0] = get<double>(f);
        r.positions[1] = get<double>(f);
        r.levels[0] = get<double>(f);
        r.levels[1] = get<double>(f);
        r.target_mask[0] = get<std::uint8_t>(f) != 0;
        r.target_mask[1] = get<std::uint8_t>(f) != 0;
        r.values.resize(kWindowLen);
        f.read(reinterpret_cast<char*>(r.values.data()),
               static_cast<std::streamsize>(kWindowLen * sizeof(double)));
        if (!f) throw std::runtime_error("dataset file: truncated");
        ds.records.push_back(std::move(r));
        ds.split.push_back(static_cast<SplitTag>(tag));
    }
    return ds;
}

void export_dataset_csv(const NetworkDataset& ds, const std::string& path) {
    auto f = open_out(path, std::ios::out);
    f << std::setprecision(17);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        for (double v : r.values) f << v << ",";
        f << r.label << "," << r.pnr_db << ","
          << static_cast<int>(ds.split.empty() ? kTrain : ds.split[i]) << "\n";
    }
}

void export_dataset_csv(const WindowDataset& ds, const std::string& path) {
    auto f = open_out(path, std::ios::out);
    f << std::setprecision(17);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        for (double v : r.values) f << v << ",";
        f << r.event_class << "," << r.positions[0] << "," << r.positions[1]
          << "," << r.levels[0] << "," << r.levels[1] << ","
          << r.target_mask[0] << "," << r.target_mask[1] << "," << r.pnr_db
          << "," << static_cast<int>(ds.split.empty() ? kTrain : ds.split[i])
          << "\n";
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_checkpoint(const std::string& path, const std::string& kind,
                      const std::string& dims, nn::ParamRefs refs,
                      std::uint64_t seed, std::uint64_t digest) {
    auto f = open_out(path, std::ios::out | std::ios::binary);
    f << "ponwatch-checkpoint v1\n";
    f << "kind " << kind << "\n";
    f << "seed " << seed << "\n";
    f << "digest " << std::hex << std::setw(16) << std::setfill('0') << digest
      << std::dec << "\n";
    f << "dims " << dims << "\n";
    write_params(f, refs);
    f << "end\n";
}

struct CheckpointHead {
    std::string kind;
    std::vector<std::string> dims;
};

CheckpointHead read_checkpoint_head(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line) || line != "ponwatch-checkpoint v1")
        throw std::runtime_error("not a ponwatch checkpoint: " + path);
    CheckpointHead head;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "kind") {
            ss >> head.kind;
        } else if (key == "dims") {
            std::string tok;
            while (ss >> tok) head.dims.push_back(tok);
            return head;
        } else if (key != "seed" && key != "digest") {
            throw std::runtime_error("checkpoint: unexpected line: " + line);
        }
    }
    throw std::runtime_error("checkpoint: missing dims manifest in " + path);
}

}  // namespace

void save_checkpoint(BranchClassifier& model, const std::string& path,
                     std::uint64_t seed, std::uint64_t digest) {
    std::ostringstream dims;
    dims << "gru";
    for (const auto& g : model.gru_stack) dims << " " << g.hidden_dim();
    dims << " classes " << model.num_classes() << " seq " << model.seq_len;
    write_checkpoint(path, "branch", dims.str(), model.params(), seed, digest);
}

void save_checkpoint(GenericModelA& model, const std::string& path,
                     std::uint64_t seed, std::uint64_t digest) {
    std::ostringstream dims;
    dims << "lstm " << model.encoder.hidden_dim();
    write_checkpoint(path, "generic-a", dims.str(), model.params(), seed, digest);
}

void save_checkpoint(GenericModelB& model, const std::string& path,
                     std::uint64_t seed, std::uint64_t digest) {
    std::ostringstream dims;
    dims << "lstm " << model.encoder.hidden_dim();
    write_checkpoint(path, "generic-b", dims.str(), model.params(), seed, digest);
}

std::string peek_checkpoint_kind(const std::string& path) {
    auto f = open_in(path, std::ios::in);
    return read_checkpoint_head(f, path).kind;
}

BranchClassifier load_branch_checkpoint(const std::string& path) {
    auto f = open_in(path, std::ios::in);
    CheckpointHead head = read_checkpoint_head(f, path);
    if (head.kind != "branch")
        throw std::runtime_error("checkpoint kind mismatch in " + path);
    std::vector<int> hidden;
    int classes = 9;
    std::size_t seq = kNetworkSeqLen;
    for (std::size_t i = 1; i < head.dims.size(); ++i) {
        if (head.dims[i] == "classes") {
            classes = std::stoi(head.dims.at(++i));
        } else if (head.dims[i] == "seq") {
            seq = static_cast<std::size_t>(std::stoul(head.dims.at(++i)));
        } else {
            hidden.push_back(std::stoi(head.dims[i]));
        }
    }
    BranchClassifier model = BranchClassifier::init(0, hidden, classes, seq);
    nn::ParamRefs refs = model.params();
    read_params(f, refs);
    return model;
}

GenericModelA load_model_a_checkpoint(const std::string& path) {
    auto f = open_in(path, std::ios::in);
    CheckpointHead head = read_checkpoint_head(f, path);
    if (head.kind != "generic-a")
        throw std::runtime_error("checkpoint kind mismatch in " + path);
    GenericModelA model = GenericModelA::init(0, std::stoi(head.dims.at(1)));
    nn::ParamRefs refs = model.params();
    read_params(f, refs);
    return model;
}

GenericModelB load_model_b_checkpoint(const std::string& path) {
    auto f = open_in(path, std::ios::in);
    CheckpointHead head = read_checkpoint_head(f, path);
    if (head.kind != "generic-b")
        throw std::runtime_error("checkpoint kind mismatch in " + path);
    GenericModelB model = GenericModelB::init(0, std::stoi(head.dims.at(1)));
    nn::ParamRefs refs = model.params();
    read_params(f, refs);
    return model;
}

// ---------------------------------------------------------------------------
// CSV artifacts

void export_trace_csv(const OtdrTrace& trace, const std::string& path,
                      std::uint64_t seed, std::uint64_t digest) {
    auto f = open_out(path, std::ios::out);
    f << provenance(seed, digest);
    f << "index,value\n" << std::setprecision(17);
    for (std::size_t i = 0; i < trace.samples.size(); ++i)
        f << trace.start_index + i << "," << trace.samples[i] << "\n";
}

void export_confusion_csv(const ConfusionMatrix& cm, const std::string& path,
                          std::uint64_t seed, std::uint64_t digest,
                          const std::vector<std::string>& class_names) {
    auto f = open_out(path, std::ios::out);
    f << provenance(seed, digest);
    f << "# accuracy=" << std::setprecision(6) << cm.accuracy() << "\n";
    Mat norm = cm.row_normalized();
    f << "true\\predicted";
    for (const auto& n : class_names) f << "," << n;
    f << "\n";
    for (Eigen::Index r = 0; r < norm.rows(); ++r) {
        f << class_names.at(static_cast<std::size_t>(r));
        for (Eigen::Index c = 0; c < norm.cols(); ++c) f << "," << norm(r, c);
        f << "\n";
    }
}

void export_histogram_csv(const Histogram& h, const std::string& path,
                          std::uint64_t seed, std::uint64_t digest) {
    auto f = open_out(path, std::ios::out);
    f << provenance(seed, digest);
    f << "bin_edge,count\n" << std::setprecision(10);
    for (int k = 0; k < h.bins; ++k)
        f << h.edge(k) << "," << h.counts[static_cast<std::size_t>(k)] << "\n";
}

void export_history_csv(const TrainHistory& h, const std::string& path,
                        std::uint64_t seed, std::uint64_t digest) {
    auto f = open_out(path, std::ios::out);
    f << provenance(seed, digest);
    f << "epoch,train_loss,val_loss\n" << std::setprecision(17);
    for (std::size_t e = 0; e < h.train_loss.size(); ++e)
        f << e << "," << h.train_loss[e] << "," << h.val_loss[e] << "\n";
}

}  // namespace ponwatch
