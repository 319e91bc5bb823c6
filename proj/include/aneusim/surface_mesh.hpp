#pragma once

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "aneusim/core.hpp"

namespace aneusim {

// Watertight triangle surface, coordinates in mm, outward orientation.
struct SurfaceMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> face_region;  // optional; empty or one label per face

    AlignedBox bounds() const {
        AlignedBox b;
        for (const auto& v : vertices) b.expand(v);
        return b;
    }

    // Divergence-theorem volume: positive for outward orientation.
    double signed_volume() const {
        double vol = 0.0;
        for (const auto& f : faces) {
            const Vec3 &a = vertices[f[0]], &b = vertices[f[1]], &c = vertices[f[2]];
            vol += dot(a, cross(b, c));
        }
        return vol / 6.0;
    }

    double area() const {
        double s = 0.0;
        for (const auto& f : faces)
            s += 0.5 * norm(cross(vertices[f[1]] - vertices[f[0]], vertices[f[2]] - vertices[f[0]]));
        return s;
    }
};

enum class MeshFormat { StlBinary, StlAscii, Obj };

namespace detail {

inline void check_mesh_invariants(const SurfaceMesh& m) {
    if (m.faces.empty()) throw SimError(ErrKind::Parse, "mesh has no faces");
    for (const auto& f : m.faces) {
        for (int v : f)
            if (v < 0 || v >= static_cast<int>(m.vertices.size()))
                throw SimError(ErrKind::Parse, "face index out of range");
        Vec3 n = cross(m.vertices[f[1]] - m.vertices[f[0]], m.vertices[f[2]] - m.vertices[f[0]]);
        if (norm(n) <= 0.0) throw SimError(ErrKind::Parse, "degenerate face (zero area)");
    }
    // Every undirected edge must be shared by exactly two faces with opposite
    // directions.
    std::map<std::pair<int, int>, int> dir_count;
    for (const auto& f : m.faces) {
        for (int e = 0; e < 3; ++e) {
            int a = f[e], b = f[(e + 1) % 3];
            if (a == b) throw SimError(ErrKind::Parse, "degenerate face (repeated vertex)");
            dir_count[{a, b}]++;
        }
    }
    for (const auto& [edge, cnt] : dir_count) {
        auto rev = dir_count.find({edge.second, edge.first});
        int opp = rev == dir_count.end() ? 0 : rev->second;
        if (cnt != 1 || opp != 1)
            throw SimError(ErrKind::NotWatertight,
                           "edge (" + std::to_string(edge.first) + "," +
                               std::to_string(edge.second) + ") shared by " +
                               std::to_string(cnt + opp) + " faces");
    }
    if (m.signed_volume() <= 0.0)
        throw SimError(ErrKind::InvertedOrientation, "mesh signed volume is not positive");
}

struct VertexWelder {
    std::unordered_map<std::string, int> lut;
    std::vector<Vec3>& verts;
    explicit VertexWelder(std::vector<Vec3>& v) : verts(v) {}
    int add(const Vec3& p) {
        char key[24];
        std::memcpy(key, &p.x, 8);
        std::memcpy(key + 8, &p.y, 8);
        std::memcpy(key + 16, &p.z, 8);
        auto [it, inserted] = lut.emplace(std::string(key, 24), static_cast<int>(verts.size()));
        if (inserted) verts.push_back(p);
        return it->second;
    }
};

inline SurfaceMesh load_stl_binary(std::istream& in) {
    char header[80];
    in.read(header, 80);
    std::uint32_t ntri = 0;
    in.read(reinterpret_cast<char*>(&ntri), 4);
    if (!in) throw SimError(ErrKind::Parse, "truncated binary STL header");
    SurfaceMesh m;
    VertexWelder weld(m.vertices);
    for (std::uint32_t t = 0; t < ntri; ++t) {
        float rec[12];
        std::uint16_t attr;
        in.read(reinterpret_cast<char*>(rec), 48);
        in.read(reinterpret_cast<char*>(&attr), 2);
        if (!in) throw SimError(ErrKind::Parse, "truncated binary STL record");
        std::array<int, 3> f{};
        for (int v = 0; v < 3; ++v)
            f[v] = weld.add({rec[3 + 3 * v], rec[4 + 3 * v], rec[5 + 3 * v]});
        m.faces.push_back(f);
    }
    return m;
}

inline SurfaceMesh load_stl_ascii(std::istream& in) {
    SurfaceMesh m;
    VertexWelder weld(m.vertices);
    std::string tok;
    std::vector<Vec3> tri;
    bool in_solid = false;
    while (in >> tok) {
        if (tok == "solid") {
            in_solid = true;
            std::string rest;
            std::getline(in, rest);
        } else if (tok == "vertex") {
            Vec3 p;
            if (!(in >> p.x >> p.y >> p.z)) throw SimError(ErrKind::Parse, "bad STL vertex");
            tri.push_back(p);
        } else if (tok == "endfacet") {
            if (tri.size() != 3) throw SimError(ErrKind::Parse, "facet without 3 vertices");
            m.faces.push_back({weld.add(tri[0]), weld.add(tri[1]), weld.add(tri[2])});
            tri.clear();
        }
    }
    if (!in_solid) throw SimError(ErrKind::Parse, "not an ASCII STL (no 'solid')");
    return m;
}

inline SurfaceMesh load_obj(std::istream& in) {
    SurfaceMesh m;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z)) throw SimError(ErrKind::Parse, "bad OBJ vertex");
            m.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string ref;
            while (ls >> ref) {
                // "f v", "f v/vt", "f v/vt/vn" all start with the vertex index
                int idx = std::atoi(ref.c_str());
                if (idx == 0) throw SimError(ErrKind::Parse, "bad OBJ face index");
                if (idx < 0) idx = static_cast<int>(m.vertices.size()) + 1 + idx;
                poly.push_back(idx - 1);
            }
            if (poly.size() < 3) throw SimError(ErrKind::Parse, "OBJ face with <3 vertices");
            for (std::size_t k = 2; k < poly.size(); ++k)
                m.faces.push_back({poly[0], poly[static_cast<int>(k) - 1], poly[static_cast<int>(k)]});
        }
    }
    return m;
}

}  // namespace detail

inline SurfaceMesh load_surface(const std::string& path, MeshFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SimError(ErrKind::Io, "cannot open " + path);
    SurfaceMesh m;
    switch (format) {
        case MeshFormat::StlBinary: m = detail::load_stl_binary(in); break;
        case MeshFormat::StlAscii: m = detail::load_stl_ascii(in); break;
        case MeshFormat::Obj: m = detail::load_obj(in); break;
    }
    detail::check_mesh_invariants(m);
    return m;
}

inline MeshFormat guess_format(const std::string& path) {
    auto ends = [&](const char* s) {
        std::string suf(s);
        return path.size() >= suf.size() &&
               std::equal(suf.rbegin(), suf.rend(), path.rbegin(), [](char a, char b) {
                   return std::tolower(a) == std::tolower(b);
               });
    };
    if (ends(".obj")) return MeshFormat::Obj;
    if (ends(".stl")) {
        std::ifstream in(path, std::ios::binary);
        char head[6] = {};
        in.read(head, 5);
        return std::strncmp(head, "solid", 5) == 0 ? MeshFormat::StlAscii : MeshFormat::StlBinary;
    }
    throw SimError(ErrKind::Config, "unknown mesh extension on " + path);
}

inline void save_stl_binary(const SurfaceMesh& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimError(ErrKind::Io, "cannot write " + path);
    char header[80] = {};
    std::snprintf(header, sizeof(header), "binary stl");
    out.write(header, 80);
    std::uint32_t n = static_cast<std::uint32_t>(m.faces.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& f : m.faces) {
        const Vec3 &a = m.vertices[f[0]], &b = m.vertices[f[1]], &c = m.vertices[f[2]];
        Vec3 nr = cross(b - a, c - a);
        double nn = norm(nr);
        if (nn > 0) nr = nr / nn;
        float rec[12] = {static_cast<float>(nr.x), static_cast<float>(nr.y), static_cast<float>(nr.z),
                         static_cast<float>(a.x),  static_cast<float>(a.y),  static_cast<float>(a.z),
                         static_cast<float>(b.x),  static_cast<float>(b.y),  static_cast<float>(b.z),
                         static_cast<float>(c.x),  static_cast<float>(c.y),  static_cast<float>(c.z)};
        std::uint16_t attr = 0;
        out.write(reinterpret_cast<const char*>(rec), 48);
        out.write(reinterpret_cast<const char*>(&attr), 2);
    }
}

inline void save_stl_ascii(const SurfaceMesh& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SimError(ErrKind::Io, "cannot write " + path);
    out << "solid mesh\n";
    for (const auto& f : m.faces) {
        const Vec3 &a = m.vertices[f[0]], &b = m.vertices[f[1]], &c = m.vertices[f[2]];
        Vec3 nr = cross(b - a, c - a);
        double nn = norm(nr);
        if (nn > 0) nr = nr / nn;
        out << "  facet normal " << fmt_double(nr.x) << ' ' << fmt_double(nr.y) << ' '
            << fmt_double(nr.z) << "\n    outer loop\n";
        for (const Vec3* p : {&a, &b, &c})
            out << "      vertex " << fmt_double(p->x) << ' ' << fmt_double(p->y) << ' '
                << fmt_double(p->z) << '\n';
        out << "    endloop\n  endfacet\n";
    }
    out << "endsolid mesh\n";
}

inline void save_obj(const SurfaceMesh& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SimError(ErrKind::Io, "cannot write " + path);
    for (const auto& v : m.vertices)
        out << "v " << fmt_double(v.x) << ' ' << fmt_double(v.y) << ' ' << fmt_double(v.z) << '\n';
    for (const auto& f : m.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

// Polyline export, e.g. for rod centerlines.
inline void save_obj_polyline(const std::vector<Vec3>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SimError(ErrKind::Io, "cannot write " + path);
    for (const auto& v : points)
        out << "v " << fmt_double(v.x) << ' ' << fmt_double(v.y) << ' ' << fmt_double(v.z) << '\n';
    out << "l";
    for (std::size_t i = 1; i <= points.size(); ++i) out << ' ' << i;
    out << '\n';
}

}  // namespace aneusim
