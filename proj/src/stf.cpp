#include "fieldgen/stf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace fieldgen {

ScalarGrid query_sdf_grid(const INRParams& inr, int resolution, double lo,
                          double hi) {
    if (resolution < 2)
        throw std::invalid_argument("query_sdf_grid: resolution must be >= 2");
    ScalarGrid g;
    g.res = resolution;
    g.lo = lo;
    g.hi = hi;

    int64_t total = static_cast<int64_t>(resolution) * resolution * resolution;
    const int64_t chunk = 8192;
    std::vector<Tensor> parts;
    for (int64_t start = 0; start < total; start += chunk) {
        int64_t n = std::min(chunk, total - start);
        std::vector<double> pts(n * 3);
        for (int64_t q = 0; q < n; ++q) {
            int64_t flat = start + q;
            int z = static_cast<int>(flat % resolution);
            int y = static_cast<int>((flat / resolution) % resolution);
            int x = static_cast<int>(flat / (resolution * resolution));
            Vec3 p = g.point(x, y, z);
            pts[q * 3] = p.x;
            pts[q * 3 + 1] = p.y;
            pts[q * 3 + 2] = p.z;
        }
        Tensor batch = Tensor::from_data({n, 3}, std::move(pts));
        parts.push_back(eval_inr(inr, batch, Tensor(), kHeadStf).sdf);
    }
    Tensor flat = parts.size() == 1 ? parts[0] : concat(parts, 0);
    g.values = reshape(flat, {resolution, resolution, resolution});
    return g;
}

namespace {

// Corner c sits at ((c>>0)&1, (c>>1)&1, (c>>2)&1) in cell-local coordinates.
struct CubeTopo {
    int edge_corner[12][2];
    int edge_of_pair[8][8];
    struct Face {
        int corner[4];  // cyclic order
        int edge[4];    // edge[i] joins corner[i] and corner[(i+1)%4]
    };
    Face face[6];

    CubeTopo() {
        int ne = 0;
        for (int a = 0; a < 8; ++a)
            for (int b = 0; b < 8; ++b) edge_of_pair[a][b] = -1;
        for (int a = 0; a < 8; ++a)
            for (int b = a + 1; b < 8; ++b) {
                int x = a ^ b;
                if (x && !(x & (x - 1))) {
                    edge_corner[ne][0] = a;
                    edge_corner[ne][1] = b;
                    edge_of_pair[a][b] = edge_of_pair[b][a] = ne;
                    ++ne;
                }
            }
        int nf = 0;
        for (int axis = 0; axis < 3; ++axis)
            for (int side = 0; side < 2; ++side) {
                int u = (axis + 1) % 3, w = (axis + 2) % 3;
                int cyc[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
                for (int i = 0; i < 4; ++i)
                    face[nf].corner[i] =
                        (side << axis) | (cyc[i][0] << u) | (cyc[i][1] << w);
                for (int i = 0; i < 4; ++i)
                    face[nf].edge[i] =
                        edge_of_pair[face[nf].corner[i]][face[nf].corner[(i + 1) % 4]];
                ++nf;
            }
    }
};

const CubeTopo& topo() {
    static CubeTopo t;
    return t;
}

// Per-edge partner pairs inside one cell: each crossed edge is linked to
// one other crossed edge on each of its two incident faces, giving closed
// loops. Ambiguous faces (both diagonals crossed) are split by the sign of
// the bilinear saddle value, which depends only on the shared face values.
void link_cell_edges(const double vals[8], int adj[12][2]) {
    const CubeTopo& T = topo();
    int deg[12] = {0};
    auto add = [&](int e1, int e2) {
        adj[e1][deg[e1]++] = e2;
        adj[e2][deg[e2]++] = e1;
    };
    for (const auto& f : T.face) {
        bool in[4];
        for (int i = 0; i < 4; ++i) in[i] = vals[f.corner[i]] > 0;
        int crossed = 0;
        for (int i = 0; i < 4; ++i) crossed += in[i] != in[(i + 1) % 4];
        if (crossed == 2) {
            int first = -1;
            for (int i = 0; i < 4; ++i)
                if (in[i] != in[(i + 1) % 4]) {
                    if (first < 0)
                        first = i;
                    else
                        add(f.edge[first], f.edge[i]);
                }
        } else if (crossed == 4) {
            double f0 = vals[f.corner[0]], f1 = vals[f.corner[1]];
            double f2 = vals[f.corner[2]], f3 = vals[f.corner[3]];
            double den = f0 + f2 - f1 - f3;
            double num = f0 * f2 - f1 * f3;
            bool saddle_inside = (den != 0 ? num / den : num) > 0;
            bool corner0_inside = in[0];
            // saddle on the inside diagonal joins it; otherwise split it
            bool cut_even_corners = corner0_inside != saddle_inside;
            if (cut_even_corners) {
                add(f.edge[3], f.edge[0]);  // around corner 0
                add(f.edge[1], f.edge[2]);  // around corner 2
            } else {
                add(f.edge[0], f.edge[1]);  // around corner 1
                add(f.edge[2], f.edge[3]);  // around corner 3
            }
        }
    }
}

// Gradient of the trilinear interpolant at a cell-local point.
Vec3 trilinear_grad(const double vals[8], const Vec3& u) {
    double g[3] = {0, 0, 0};
    double uc[3] = {u.x, u.y, u.z};
    for (int c = 0; c < 8; ++c)
        for (int a = 0; a < 3; ++a) {
            double term = (c >> a) & 1 ? 1.0 : -1.0;
            for (int b = 0; b < 3; ++b) {
                if (b == a) continue;
                term *= (c >> b) & 1 ? uc[b] : 1.0 - uc[b];
            }
            g[a] += vals[c] * term;
        }
    return {g[0], g[1], g[2]};
}

struct VertexRecord {
    int64_t ia, ib;  // flat grid indices of the edge endpoints
    int axis;
    double dfa, dfb;  // d(coordinate along axis) / d(value)
};

}  // namespace

TriMesh marching_cubes(const ScalarGrid& grid, double iso) {
    const CubeTopo& T = topo();
    int R = grid.res;
    double h = grid.spacing();
    const auto& gv = grid.values.data();
    auto flat = [R](int x, int y, int z) {
        return (static_cast<int64_t>(x) * R + y) * R + z;
    };

    std::vector<double> verts;
    std::vector<VertexRecord> recs;
    std::vector<std::array<int, 3>> faces;
    std::unordered_map<uint64_t, int> vertex_of_edge;

    for (int cx = 0; cx + 1 < R; ++cx)
        for (int cy = 0; cy + 1 < R; ++cy)
            for (int cz = 0; cz + 1 < R; ++cz) {
                double vals[8];
                int64_t cidx[8];
                int config = 0;
                for (int c = 0; c < 8; ++c) {
                    cidx[c] = flat(cx + (c & 1), cy + ((c >> 1) & 1),
                                   cz + ((c >> 2) & 1));
                    vals[c] = gv[cidx[c]] - iso;
                    if (vals[c] > 0) config |= 1 << c;
                }
                if (config == 0 || config == 255) continue;

                int adj[12][2];
                link_cell_edges(vals, adj);

                // shared vertex id per crossed edge
                int vid[12];
                bool crossed[12];
                for (int e = 0; e < 12; ++e) {
                    int a = T.edge_corner[e][0], b = T.edge_corner[e][1];
                    crossed[e] = (vals[a] > 0) != (vals[b] > 0);
                    vid[e] = -1;
                    if (!crossed[e]) continue;
                    int axis = (a ^ b) == 1 ? 0 : (a ^ b) == 2 ? 1 : 2;
                    int lx = cx + (a & 1), ly = cy + ((a >> 1) & 1),
                        lz = cz + ((a >> 2) & 1);
                    uint64_t key =
                        ((static_cast<uint64_t>(axis) * R + lx) * R + ly) * R + lz;
                    auto it = vertex_of_edge.find(key);
                    if (it != vertex_of_edge.end()) {
                        vid[e] = it->second;
                        continue;
                    }
                    double fa = vals[a], fb = vals[b];
                    double t = fa / (fa - fb);
                    Vec3 pa = grid.point(cx + (a & 1), cy + ((a >> 1) & 1),
                                         cz + ((a >> 2) & 1));
                    Vec3 p = pa;
                    (axis == 0 ? p.x : axis == 1 ? p.y : p.z) += t * h;
                    vid[e] = static_cast<int>(recs.size());
                    vertex_of_edge.emplace(key, vid[e]);
                    verts.insert(verts.end(), {p.x, p.y, p.z});
                    double d2 = (fa - fb) * (fa - fb);
                    recs.push_back({cidx[a], cidx[b], axis, h * -fb / d2,
                                    h * fa / d2});
                }

                bool used[12] = {false};
                for (int start = 0; start < 12; ++start) {
                    if (!crossed[start] || used[start]) continue;
                    std::vector<int> loop;
                    int prev = -1, cur = start;
                    do {
                        loop.push_back(cur);
                        used[cur] = true;
                        int nxt = adj[cur][0] != prev ? adj[cur][0] : adj[cur][1];
                        prev = cur;
                        cur = nxt;
                    } while (cur != start);

                    // orient the loop so triangle normals point toward
                    // decreasing field values (outside)
                    Vec3 nrm{0, 0, 0}, centroid{0, 0, 0};
                    for (size_t i = 0; i < loop.size(); ++i) {
                        const double* p = &verts[vid[loop[i]] * 3];
                        const double* q = &verts[vid[loop[(i + 1) % loop.size()]] * 3];
                        nrm.x += (p[1] - q[1]) * (p[2] + q[2]);
                        nrm.y += (p[2] - q[2]) * (p[0] + q[0]);
                        nrm.z += (p[0] - q[0]) * (p[1] + q[1]);
                        centroid = centroid + Vec3{p[0], p[1], p[2]};
                    }
                    centroid = centroid * (1.0 / loop.size());
                    Vec3 base = grid.point(cx, cy, cz);
                    Vec3 local = (centroid - base) * (1.0 / h);
                    if (nrm.dot(trilinear_grad(vals, local)) > 0)
                        std::reverse(loop.begin(), loop.end());

                    for (size_t i = 1; i + 1 < loop.size(); ++i) {
                        int a = vid[loop[0]], b = vid[loop[i]], c = vid[loop[i + 1]];
                        Vec3 va{verts[a * 3], verts[a * 3 + 1], verts[a * 3 + 2]};
                        Vec3 vb{verts[b * 3], verts[b * 3 + 1], verts[b * 3 + 2]};
                        Vec3 vc{verts[c * 3], verts[c * 3 + 1], verts[c * 3 + 2]};
                        if ((vb - va).cross(vc - va).norm() < 2e-12) continue;
                        faces.push_back({a, b, c});
                    }
                }
            }

    TriMesh mesh;
    mesh.faces = std::move(faces);
    if (recs.empty()) return mesh;

    int64_t V = static_cast<int64_t>(recs.size());
    auto back = [recs](Node& n) {
        Node* p = n.parents[0].node();
        for (size_t v = 0; v < recs.size(); ++v) {
            double g = n.grad[v * 3 + recs[v].axis];
            p->grad[recs[v].ia] += g * recs[v].dfa;
            p->grad[recs[v].ib] += g * recs[v].dfb;
        }
    };
    mesh.vertices = make_op({V, 3}, std::move(verts), {grid.values}, back,
                            grid.values.dtype());
    return mesh;
}

void color_vertices(const INRParams& inr, TriMesh& mesh) {
    if (mesh.empty()) throw std::invalid_argument("color_vertices: empty mesh");
    mesh.colors = eval_inr(inr, mesh.vertices, Tensor(), kHeadStf).tex;
}

namespace {

// Forward-mode scalar carrying partials w.r.t. the nine coordinates of one
// triangle's vertices.
struct D9 {
    double v = 0;
    std::array<double, 9> d{};

    D9() = default;
    D9(double x) : v(x) {}
};

D9 operator+(const D9& a, const D9& b) {
    D9 r(a.v + b.v);
    for (int i = 0; i < 9; ++i) r.d[i] = a.d[i] + b.d[i];
    return r;
}
D9 operator-(const D9& a, const D9& b) {
    D9 r(a.v - b.v);
    for (int i = 0; i < 9; ++i) r.d[i] = a.d[i] - b.d[i];
    return r;
}
D9 operator*(const D9& a, const D9& b) {
    D9 r(a.v * b.v);
    for (int i = 0; i < 9; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
}
D9 operator/(const D9& a, const D9& b) {
    D9 r(a.v / b.v);
    for (int i = 0; i < 9; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) / b.v;
    return r;
}
D9 sqrt(const D9& a) {
    D9 r(std::sqrt(a.v));
    for (int i = 0; i < 9; ++i) r.d[i] = a.d[i] / (2 * r.v);
    return r;
}
D9 relu(const D9& a) { return a.v > 0 ? a : D9(0.0); }

struct DV3 {
    D9 x, y, z;
};
DV3 operator-(const DV3& a, const DV3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
D9 dot(const DV3& a, const DV3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
DV3 cross(const DV3& a, const DV3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
DV3 constant(const Vec3& v) { return {D9(v.x), D9(v.y), D9(v.z)}; }

struct PixelHit {
    int pixel;
    int tri;
    double w[3], shade;
    double dw[3][9], dshade[9];
};

bool ray_tri(const Ray& r, const double* va, const double* vb, const double* vc,
             double* t_out, double* u_out, double* v_out) {
    Vec3 a{va[0], va[1], va[2]}, b{vb[0], vb[1], vb[2]}, c{vc[0], vc[1], vc[2]};
    Vec3 e1 = b - a, e2 = c - a;
    Vec3 pv = r.dir.cross(e2);
    double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) return false;
    Vec3 tv = r.origin - a;
    double u = tv.dot(pv) / det;
    if (u < 0 || u > 1) return false;
    Vec3 qv = tv.cross(e1);
    double v = r.dir.dot(qv) / det;
    if (v < 0 || u + v > 1) return false;
    double t = e2.dot(qv) / det;
    if (t < 1e-9) return false;
    *t_out = t;
    *u_out = u;
    *v_out = v;
    return true;
}

}  // namespace

Tensor render_mesh(const TriMesh& mesh, const Camera& cam, const LightRig& light) {
    int H = cam.height, W = cam.width;
    if (mesh.empty()) return Tensor::zeros({H, W, 4});

    Tensor colors = mesh.colors;
    if (!colors.defined()) colors = Tensor::full({mesh.vertex_count(), 3}, 0.5);

    const auto& vd = mesh.vertices.data();
    const auto& cd = colors.data();
    std::vector<Ray> rays = cast_rays(cam, 1e-3, 1e9);
    Vec3 L = light.direction.normalized();

    std::vector<double> out(static_cast<size_t>(H) * W * 4, 0.0);
    std::vector<PixelHit> hits;

    for (size_t pix = 0; pix < rays.size(); ++pix) {
        const Ray& r = rays[pix];
        double best_t = 1e30;
        int best = -1;
        for (size_t f = 0; f < mesh.faces.size(); ++f) {
            const auto& fc = mesh.faces[f];
            double t, u, v;
            if (ray_tri(r, &vd[fc[0] * 3], &vd[fc[1] * 3], &vd[fc[2] * 3], &t, &u,
                        &v) &&
                t < best_t) {
                best_t = t;
                best = static_cast<int>(f);
            }
        }
        if (best < 0) continue;

        const auto& fc = mesh.faces[best];
        DV3 tv[3];
        for (int i = 0; i < 3; ++i) {
            tv[i].x = D9(vd[fc[i] * 3]);
            tv[i].y = D9(vd[fc[i] * 3 + 1]);
            tv[i].z = D9(vd[fc[i] * 3 + 2]);
            tv[i].x.d[i * 3] = 1;
            tv[i].y.d[i * 3 + 1] = 1;
            tv[i].z.d[i * 3 + 2] = 1;
        }
        DV3 e1 = tv[1] - tv[0], e2 = tv[2] - tv[0];
        DV3 n = cross(e1, e2);
        D9 nn = sqrt(dot(n, n));
        DV3 unit{n.x / nn, n.y / nn, n.z / nn};
        double sgn = (unit.x.v * r.dir.x + unit.y.v * r.dir.y + unit.z.v * r.dir.z) <
                             0
                         ? 1.0
                         : -1.0;
        D9 ndl = (unit.x * D9(L.x) + unit.y * D9(L.y) + unit.z * D9(L.z)) * D9(sgn);
        D9 shade = D9(light.ambient) + D9(light.diffuse) * relu(ndl);

        DV3 dir = constant(r.dir);
        DV3 pv = cross(dir, e2);
        D9 det = dot(e1, pv);
        DV3 tvec = constant(r.origin) - tv[0];
        D9 u = dot(tvec, pv) / det;
        DV3 qv = cross(tvec, e1);
        D9 v = dot(dir, qv) / det;
        D9 w0 = D9(1.0) - u - v;

        PixelHit ph;
        ph.pixel = static_cast<int>(pix);
        ph.tri = best;
        const D9* ws[3] = {&w0, &u, &v};
        for (int i = 0; i < 3; ++i) {
            ph.w[i] = ws[i]->v;
            for (int j = 0; j < 9; ++j) ph.dw[i][j] = ws[i]->d[j];
        }
        ph.shade = shade.v;
        for (int j = 0; j < 9; ++j) ph.dshade[j] = shade.d[j];
        hits.push_back(ph);

        double* px = &out[pix * 4];
        for (int ch = 0; ch < 3; ++ch) {
            double c = 0;
            for (int i = 0; i < 3; ++i) c += ph.w[i] * cd[fc[i] * 3 + ch];
            px[ch] = std::clamp(c * ph.shade, 0.0, 1.0);
        }
        px[3] = 1.0;
    }

    auto faces = mesh.faces;
    auto back = [hits, faces](Node& n) {
        Node* vp = n.parents[0].node();
        Node* cp = n.parents[1].node();
        for (const PixelHit& ph : hits) {
            const auto& fc = faces[ph.tri];
            const double* g = &n.grad[static_cast<size_t>(ph.pixel) * 4];
            for (int ch = 0; ch < 3; ++ch) {
                if (g[ch] == 0) continue;
                double csum = 0;
                for (int i = 0; i < 3; ++i) {
                    double ci = cp->data[fc[i] * 3 + ch];
                    cp->grad[fc[i] * 3 + ch] += g[ch] * ph.w[i] * ph.shade;
                    csum += ph.w[i] * ci;
                }
                for (int j = 0; j < 9; ++j) {
                    double dws = 0;
                    for (int i = 0; i < 3; ++i)
                        dws += ph.dw[i][j] * cp->data[fc[i] * 3 + ch];
                    double contrib = g[ch] * (dws * ph.shade + csum * ph.dshade[j]);
                    vp->grad[fc[j / 3] * 3 + j % 3] += contrib;
                }
            }
        }
    };
    return make_op({H, W, 4}, std::move(out), {mesh.vertices, colors}, back,
                   DType::f64);
}

Image tensor_to_image(const Tensor& t) {
    if (t.ndim() != 3) throw std::invalid_argument("tensor_to_image: want [H,W,C]");
    Image img(static_cast<int>(t.dim(1)), static_cast<int>(t.dim(0)),
              static_cast<int>(t.dim(2)));
    for (int64_t i = 0; i < t.numel(); ++i)
        img.pix[i] = static_cast<float>(t.at(i));
    return img;
}

Tensor stf_loss(const Tensor& render, const Tensor& target) {
    if (render.shape() != target.shape())
        shape_error("stf_loss shape mismatch", render.shape(), target.shape());
    int64_t n_images = render.ndim() == 4 ? render.dim(0) : 1;
    int64_t hw = render.dim(render.ndim() - 3) * render.dim(render.ndim() - 2);
    return mul_scalar(l2_loss_sum(render, target), 1.0 / (n_images * hw));
}

void write_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_obj: cannot open " + path);
    int64_t V = mesh.vertex_count();
    for (int64_t i = 0; i < V; ++i) {
        double r = 1, g = 1, b = 1;
        if (mesh.colors.defined()) {
            r = mesh.colors.at(i * 3);
            g = mesh.colors.at(i * 3 + 1);
            b = mesh.colors.at(i * 3 + 2);
        }
        f << "v " << mesh.vertices.at(i * 3) << ' ' << mesh.vertices.at(i * 3 + 1)
          << ' ' << mesh.vertices.at(i * 3 + 2) << ' ' << r << ' ' << g << ' ' << b
          << '\n';
    }
    for (const auto& fc : mesh.faces)
        f << "f " << fc[0] + 1 << ' ' << fc[1] + 1 << ' ' << fc[2] + 1 << '\n';
}

void write_ply(const std::string& path, const TriMesh& mesh) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_ply: cannot open " + path);
    int64_t V = mesh.vertex_count();
    f << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << V << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
    for (int64_t i = 0; i < V; ++i) {
        float p[3] = {static_cast<float>(mesh.vertices.at(i * 3)),
                      static_cast<float>(mesh.vertices.at(i * 3 + 1)),
                      static_cast<float>(mesh.vertices.at(i * 3 + 2))};
        f.write(reinterpret_cast<const char*>(p), sizeof(p));
        unsigned char rgb[3] = {255, 255, 255};
        if (mesh.colors.defined())
            for (int c = 0; c < 3; ++c)
                rgb[c] = static_cast<unsigned char>(
                    std::clamp(mesh.colors.at(i * 3 + c), 0.0, 1.0) * 255.0 + 0.5);
        f.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
    }
    for (const auto& fc : mesh.faces) {
        unsigned char n = 3;
        f.write(reinterpret_cast<const char*>(&n), 1);
        int32_t idx[3] = {fc[0], fc[1], fc[2]};
        f.write(reinterpret_cast<const char*>(idx), sizeof(idx));
    }
}

}  // namespace fieldgen
