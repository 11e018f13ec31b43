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

#include "n4mc/mesh_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace n4mc {

namespace {

std::string lower_ext(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

[[noreturn]] void fail(const std::string& path, size_t line, const std::string& what) {
    throw FormatError(path + ":" + std::to_string(line) + ": " + what);
}

// --- OBJ ---

TriangleMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z)) fail(path, lineno, "malformed vertex record");
            verts.push_back(v);
        } else if (tag == "f") {
            std::array<int, 3> f{};
            std::string tok;
            int k = 0;
            while (ls >> tok) {
                if (k >= 3) fail(path, lineno, "non-triangle face (only triangles are supported)");
                // "i", "i/..", "i//..": the position index is the first field.
                size_t slash = tok.find('/');
                std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                int idx = 0;
                auto res = std::from_chars(head.data(), head.data() + head.size(), idx);
                if (res.ec != std::errc() || res.ptr != head.data() + head.size())
                    fail(path, lineno, "malformed face index '" + tok + "'");
                if (idx == 0) fail(path, lineno, "face index 0 (OBJ indices are 1-based)");
                if (idx < 0) idx = static_cast<int>(verts.size()) + idx + 1;
                if (idx < 1 || idx > static_cast<int>(verts.size()))
                    fail(path, lineno, "face index " + std::to_string(idx) + " out of range");
                f[k++] = idx - 1;
            }
            if (k != 3) fail(path, lineno, "face with fewer than 3 indices");
            faces.push_back(f);
        }
        // vn / vt / usemtl / o / g / s: ignored.
    }
    if (verts.empty() || faces.empty()) throw FormatError(path + ": empty geometry");
    TriangleMesh m(std::move(verts), std::move(faces));
    return m;
}

void save_obj(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    std::string buf;
    buf.reserve(mesh.vertices.size() * 40 + mesh.faces.size() * 24);
    char tmp[96];
    for (const auto& v : mesh.vertices) {
        buf += "v";
        for (int i = 0; i < 3; ++i) {
            buf += ' ';
            auto res = std::to_chars(tmp, tmp + sizeof(tmp), v[i]);
            buf.append(tmp, res.ptr);
        }
        buf += '\n';
    }
    for (const auto& f : mesh.faces) {
        int n = std::snprintf(tmp, sizeof(tmp), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
        buf.append(tmp, n);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

// --- PLY ---

struct PlyProperty {
    std::string type;       // scalar type, or list count type
    std::string item_type;  // list item type (lists only)
    std::string name;
    bool is_list = false;
};

struct PlyElement {
    std::string name;
    size_t count = 0;
    std::vector<PlyProperty> props;
};

size_t scalar_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw FormatError("unknown PLY type '" + t + "'");
}

double read_scalar_binary(const char*& p, const std::string& t) {
    auto get = [&p]<class T>() {
        T v;
        std::memcpy(&v, p, sizeof(T));
        p += sizeof(T);
        return static_cast<double>(v);
    };
    if (t == "char" || t == "int8") return get.operator()<int8_t>();
    if (t == "uchar" || t == "uint8") return get.operator()<uint8_t>();
    if (t == "short" || t == "int16") return get.operator()<int16_t>();
    if (t == "ushort" || t == "uint16") return get.operator()<uint16_t>();
    if (t == "int" || t == "int32") return get.operator()<int32_t>();
    if (t == "uint" || t == "uint32") return get.operator()<uint32_t>();
    if (t == "float" || t == "float32") return get.operator()<float>();
    if (t == "double" || t == "float64") return get.operator()<double>();
    throw FormatError("unknown PLY type '" + t + "'");
}

TriangleMesh load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    size_t lineno = 0;
    auto next_line = [&]() {
        if (!std::getline(in, line)) fail(path, lineno, "unexpected end of header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++lineno;
    };

    next_line();
    if (line != "ply") fail(path, lineno, "not a PLY file");
    std::string format;
    std::vector<PlyElement> elements;
    for (;;) {
        next_line();
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "comment" || tag == "obj_info") continue;
        if (tag == "format") {
            ls >> format;
            if (format != "ascii" && format != "binary_little_endian")
                fail(path, lineno, "unsupported PLY format '" + format + "'");
        } else if (tag == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            if (elements.empty()) fail(path, lineno, "property before element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                p.is_list = true;
                ls >> p.type >> p.item_type >> p.name;
            } else {
                p.type = t;
                ls >> p.name;
            }
            elements.back().props.push_back(p);
        } else if (tag == "end_header") {
            break;
        } else {
            fail(path, lineno, "unknown header record '" + tag + "'");
        }
    }
    if (format.empty()) fail(path, lineno, "missing format record");

    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;

    std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const char* bp = rest.data();
    const char* bend = rest.data() + rest.size();
    std::istringstream as(format == "ascii" ? rest : std::string());

    auto ascii_scalar = [&](const std::string&) {
        double v;
        if (!(as >> v)) throw FormatError(path + ": truncated ascii body");
        return v;
    };
    auto bin_scalar = [&](const std::string& t) {
        if (bp + scalar_size(t) > bend)
            throw FormatError(path + ": truncated binary body at byte " +
                              std::to_string(bp - rest.data()));
        return read_scalar_binary(bp, t);
    };
    auto read_value = [&](const std::string& t) {
        return format == "ascii" ? ascii_scalar(t) : bin_scalar(t);
    };

    for (const auto& e : elements) {
        if (e.name == "vertex") {
            verts.reserve(e.count);
            for (size_t i = 0; i < e.count; ++i) {
                Vec3 v;
                for (const auto& p : e.props) {
                    if (p.is_list) throw FormatError(path + ": list property on vertex element");
                    double val = read_value(p.type);
                    if (p.name == "x") v.x = val;
                    else if (p.name == "y") v.y = val;
                    else if (p.name == "z") v.z = val;
                }
                verts.push_back(v);
            }
        } else if (e.name == "face") {
            faces.reserve(e.count);
            for (size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.props) {
                    if (!p.is_list) {
                        read_value(p.type);
                        continue;
                    }
                    int n = static_cast<int>(read_value(p.type));
                    if (p.name == "vertex_indices" || p.name == "vertex_index") {
                        if (n != 3)
                            throw FormatError(path + ": face " + std::to_string(i) + " has " +
                                              std::to_string(n) + " vertices (only triangles are supported)");
                        std::array<int, 3> f{};
                        for (int k = 0; k < 3; ++k) f[k] = static_cast<int>(read_value(p.item_type));
                        faces.push_back(f);
                    } else {
                        for (int k = 0; k < n; ++k) read_value(p.item_type);
                    }
                }
            }
        } else {
            // Skip unrecognized elements.
            for (size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.props) {
                    if (p.is_list) {
                        int n = static_cast<int>(read_value(p.type));
                        for (int k = 0; k < n; ++k) read_value(p.item_type);
                    } else {
                        read_value(p.type);
                    }
                }
            }
        }
    }
    if (verts.empty() || faces.empty()) throw FormatError(path + ": empty geometry");
    return TriangleMesh(std::move(verts), std::move(faces));
}

void save_ply(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "ply\nformat binary_little_endian 1.0\n"
        << "element vertex " << mesh.vertices.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "element face " << mesh.faces.size() << "\n"
        << "property list uchar int vertex_indices\nend_header\n";
    for (const auto& v : mesh.vertices) {
        double xyz[3] = {v.x, v.y, v.z};
        out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    }
    for (const auto& f : mesh.faces) {
        unsigned char n = 3;
        int idx[3] = {f[0], f[1], f[2]};
        out.write(reinterpret_cast<const char*>(&n), 1);
        out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace

TriangleMesh load_mesh(const std::string& path) {
    std::string ext = lower_ext(path);
    if (ext == "obj") return load_obj(path);
    if (ext == "ply") return load_ply(path);
    throw FormatError(path + ": unsupported mesh format '" + ext + "' (OBJ and PLY only)");
}

void save_mesh(const TriangleMesh& mesh, const std::string& path) {
    if (mesh.empty()) throw ValidationError("save_mesh: empty mesh");
    mesh.validate();
    std::string ext = lower_ext(path);
    if (ext == "obj") return save_obj(mesh, path);
    if (ext == "ply") return save_ply(mesh, path);
    throw FormatError(path + ": unsupported mesh format '" + ext + "' (OBJ and PLY only)");
}

}  // namespace n4mc
