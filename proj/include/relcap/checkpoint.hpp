#pragma once

#include "relcap/tensor.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace relcap {

/// Tensor container: a human-readable manifest (tag, name, dtype, shape,
/// byte offset) followed by raw little-endian scalar payloads. Round-trips
/// are bit-exact at matching dtype. Tags separate sections (model weights,
/// mixture models, optimizer state) sharing one file.
class Checkpoint {
  public:
    struct Entry {
        std::string tag;
        std::string name;
        std::string dtype; // "f64" | "f32"
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        std::vector<unsigned char> bytes;
    };

    template <class S>
    void put(const std::string& tag, const std::string& name, const Matrix<S>& m) {
        if (name.find(' ') != std::string::npos || tag.find(' ') != std::string::npos)
            throw ValidationError("checkpoint: tag/name must not contain spaces: " + tag + " " + name);
        Entry e;
        e.tag = tag;
        e.name = name;
        e.dtype = dtype_of<S>();
        e.rows = m.rows();
        e.cols = m.cols();
        e.bytes.resize(std::size_t(m.size()) * sizeof(S));
        if (m.size() > 0) std::memcpy(e.bytes.data(), m.data(), e.bytes.size());
        entries_[key(tag, name)] = std::move(e);
    }

    template <class S>
    Matrix<S> get(const std::string& tag, const std::string& name) const {
        auto it = entries_.find(key(tag, name));
        if (it == entries_.end())
            throw ValidationError("checkpoint: missing entry " + tag + "/" + name);
        const Entry& e = it->second;
        if (e.dtype != dtype_of<S>())
            throw ValidationError("checkpoint: entry " + tag + "/" + name + " has dtype " +
                                  e.dtype + ", requested " + dtype_of<S>());
        Matrix<S> m(e.rows, e.cols);
        if (m.size() > 0) std::memcpy(m.data(), e.bytes.data(), e.bytes.size());
        return m;
    }

    bool has(const std::string& tag, const std::string& name) const {
        return entries_.count(key(tag, name)) > 0;
    }

    std::vector<std::string> names(const std::string& tag) const {
        std::vector<std::string> out;
        for (const auto& [k, e] : entries_)
            if (e.tag == tag) out.push_back(e.name);
        return out;
    }

    template <class S>
    void put_scalar(const std::string& tag, const std::string& name, S v) {
        Matrix<S> m(1, 1);
        m(0, 0) = v;
        put(tag, name, m);
    }

    template <class S>
    S get_scalar(const std::string& tag, const std::string& name) const {
        return get<S>(tag, name)(0, 0);
    }

    template <class S>
    void put_parameters(const std::string& tag, const std::vector<Parameter<S>*>& params) {
        for (const Parameter<S>* p : params) put(tag, p->name, p->value);
    }

    template <class S>
    void load_parameters(const std::string& tag, const std::vector<Parameter<S>*>& params) const {
        for (Parameter<S>* p : params) {
            Matrix<S> v = get<S>(tag, p->name);
            if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
                throw ValidationError("checkpoint: parameter " + p->name + " has shape " +
                                      shape_str(v.rows(), v.cols()) + ", expected " +
                                      shape_str(p->value.rows(), p->value.cols()));
            p->value = std::move(v);
            p->zero_grad();
        }
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ValidationError("checkpoint: cannot open " + path + " for writing");
        std::ostringstream header;
        header << "relcap-checkpoint v1\n";
        header << "count " << entries_.size() << "\n";
        std::size_t offset = 0;
        for (const auto& [k, e] : entries_) {
            header << "entry " << e.tag << " " << e.name << " " << e.dtype << " " << e.rows << " "
                   << e.cols << " " << offset << "\n";
            offset += e.bytes.size();
        }
        header << "data " << offset << "\n";
        out << header.str();
        for (const auto& [k, e] : entries_)
            out.write(reinterpret_cast<const char*>(e.bytes.data()),
                      std::streamsize(e.bytes.size()));
        if (!out) throw ValidationError("checkpoint: write to " + path + " failed");
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ValidationError("checkpoint: cannot open " + path);
        std::string line;
        if (!std::getline(in, line) || line != "relcap-checkpoint v1")
            throw ValidationError("checkpoint: bad format header in " + path);
        std::size_t count = 0;
        {
            std::getline(in, line);
            std::istringstream ls(line);
            std::string kw;
            if (!(ls >> kw >> count) || kw != "count")
                throw ValidationError("checkpoint: bad count line in " + path);
        }
        struct Pending {
            Entry e;
            std::size_t offset;
        };
        std::vector<Pending> pend(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::getline(in, line);
            std::istringstream ls(line);
            std::string kw;
            Pending& p = pend[i];
            if (!(ls >> kw >> p.e.tag >> p.e.name >> p.e.dtype >> p.e.rows >> p.e.cols >>
                  p.offset) ||
                kw != "entry")
                throw ValidationError("checkpoint: bad entry line in " + path + ": " + line);
        }
        std::size_t total = 0;
        {
            std::getline(in, line);
            std::istringstream ls(line);
            std::string kw;
            if (!(ls >> kw >> total) || kw != "data")
                throw ValidationError("checkpoint: bad data line in " + path);
        }
        std::vector<unsigned char> blob(total);
        in.read(reinterpret_cast<char*>(blob.data()), std::streamsize(total));
        if (std::size_t(in.gcount()) != total)
            throw ValidationError("checkpoint: truncated payload in " + path);
        Checkpoint ck;
        for (auto& p : pend) {
            std::size_t n = std::size_t(p.e.rows) * std::size_t(p.e.cols) *
                            (p.e.dtype == "f64" ? sizeof(double) : sizeof(float));
            if (p.offset + n > total)
                throw ValidationError("checkpoint: entry " + p.e.name + " overruns payload");
            p.e.bytes.assign(blob.begin() + long(p.offset), blob.begin() + long(p.offset + n));
            ck.entries_[key(p.e.tag, p.e.name)] = std::move(p.e);
        }
        return ck;
    }

  private:
    template <class S>
    static std::string dtype_of() {
        if constexpr (std::is_same_v<S, double>) return "f64";
        else if constexpr (std::is_same_v<S, float>) return "f32";
        else static_assert(sizeof(S) == 0, "unsupported checkpoint scalar");
    }

    static std::string key(const std::string& tag, const std::string& name) {
        return tag + "\x1f" + name;
    }

    std::map<std::string, Entry> entries_;
};

} // namespace relcap
