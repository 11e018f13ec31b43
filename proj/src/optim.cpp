// Copyright 2026 the n4mc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "n4mc/optim.hpp"

namespace n4mc {

namespace {

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& in, T& v) {
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError("truncated checkpoint");
}

}  // namespace

void ParamStore::save(const std::string& path, uint64_t fingerprint) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write("N4MP", 4);
    write_pod(out, fingerprint);
    uint32_t count = static_cast<uint32_t>(params_.size());
    write_pod(out, count);
    for (const auto& p : params_) {
        uint32_t name_len = static_cast<uint32_t>(p.name.size());
        write_pod(out, name_len);
        out.write(p.name.data(), name_len);
        uint32_t ndim = static_cast<uint32_t>(p.tensor.shape().size());
        write_pod(out, ndim);
        for (int d : p.tensor.shape()) {
            uint32_t du = static_cast<uint32_t>(d);
            write_pod(out, du);
        }
        out.write(reinterpret_cast<const char*>(p.tensor.value().data()),
                  static_cast<std::streamsize>(p.tensor.numel() * sizeof(float)));
    }
    if (!out) throw IoError("write failed: " + path);
}

void ParamStore::load(const std::string& path, uint64_t fingerprint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "N4MP", 4) != 0)
        throw FormatError(path + ": not a parameter checkpoint");
    uint64_t fp;
    read_pod(in, fp);
    if (fp != fingerprint)
        throw ValidationError(path + ": config fingerprint mismatch (file " + std::to_string(fp) +
                              ", expected " + std::to_string(fingerprint) + ")");
    uint32_t count;
    read_pod(in, count);
    if (count != params_.size())
        throw ValidationError(path + ": parameter count mismatch");
    for (auto& p : params_) {
        uint32_t name_len;
        read_pod(in, name_len);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw FormatError(path + ": truncated checkpoint");
        if (name != p.name)
            throw ValidationError(path + ": parameter order mismatch at '" + name + "'");
        uint32_t ndim;
        read_pod(in, ndim);
        if (ndim != p.tensor.shape().size())
            throw ValidationError(path + ": rank mismatch for '" + name + "'");
        for (int d : p.tensor.shape()) {
            uint32_t du;
            read_pod(in, du);
            if (du != static_cast<uint32_t>(d))
                throw ValidationError(path + ": shape mismatch for '" + name + "'");
        }
        if (!in.read(reinterpret_cast<char*>(p.tensor.value().data()),
                     static_cast<std::streamsize>(p.tensor.numel() * sizeof(float))))
            throw FormatError(path + ": truncated checkpoint");
    }
}

}  // namespace n4mc
