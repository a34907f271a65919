// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "neurtex/errors.hpp"
#include "neurtex/rng.hpp"
#include "neurtex/texture.hpp"
#include "neurtex/views.hpp"
#include "oracles.hpp"

using namespace neurtex;

namespace {

Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> g;
  Vec3 v{g(rng), g(rng), g(rng)};
  return v / norm(v);
}

struct Fixture {
  Scene scene;
  CameraView view;
  RayBuffer buf;
  NeuralTexture tex;
};

Fixture make_fixture(int id, std::uint64_t seed, int tex_hw = 8, int h = 32, int w = 64) {
  Fixture f;
  f.scene = generate_scene(id, seed);
  ViewSamplingConfig cfg;
  cfg.height = h;
  cfg.width = w;
  cfg.focal = 50.0;
  f.view = sample_random_views(f.scene, 1, seed + 1, cfg).front();
  f.buf = ray_cast(f.scene, f.view);
  f.tex = NeuralTexture::for_scene(f.scene, tex_hw, tex_hw, 3, seed + 2);
  return f;
}

double dot_images(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a.data()[i]) * b.data()[i];
  return s;
}

}  // namespace

TEST_SUITE("texture") {

TEST_CASE("axis normal puts all weight on one plane") {
  const Aabb box{{-1, -1, -1}, {1, 1, 1}};
  const auto p = triplanar_coords({0.2, 0.1, 0.3}, {1, 0, 0}, box, 8, 8);
  CHECK(p[0].plane == 0);
  CHECK(p[0].weight == 1.0);
  CHECK(p[1].plane == 2);
  CHECK(p[1].weight == 0.0);
  CHECK(p[2].plane == 4);
  CHECK(p[2].weight == 0.0);
  const auto q = triplanar_coords({0, 0, 0}, {-1, 0, 0}, box, 8, 8);
  CHECK(q[0].plane == 1);
}

TEST_CASE("weights are squared normal components") {
  const Aabb box{{-1, -1, -1}, {1, 1, 1}};
  const auto p = triplanar_coords({0, 0, 0}, {0.6, 0.8, 0.0}, box, 8, 8);
  CHECK(p[0].weight == doctest::Approx(0.36));
  CHECK(p[1].weight == doctest::Approx(0.64));
  CHECK(p[2].weight == 0.0);
  CHECK(p[0].weight + p[1].weight + p[2].weight == doctest::Approx(1.0));
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const Vec3 n = random_unit(rng);
    const auto t = triplanar_coords({0, 0, 0}, n, box, 8, 8);
    double sum = 0;
    for (int a = 0; a < 3; ++a) {
      CHECK(t[a].weight >= 0.0);
      CHECK(t[a].weight == n[a] * n[a]);
      CHECK(plane_axis(t[a].plane) == a);
      CHECK(plane_sign(t[a].plane) * n[a] >= 0.0);
      sum += t[a].weight;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("out-of-box points clamp to the plane edge") {
  const Aabb box{{0, 0, 0}, {1, 2, 4}};
  const auto p = triplanar_coords({5, -3, 10}, {0, 0, 1}, box, 8, 16);
  CHECK(p[2].row == 7.0);  // x clamped to hi
  CHECK(p[2].col == 0.0);  // y clamped to lo
  CHECK(p[0].row == 0.0);
  CHECK(p[0].col == 15.0);
}

TEST_CASE("bilinear read") {
  std::vector<float> plane(4 * 9 * 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 9; ++j) {
      plane[(i * 9 + j) * 2] = static_cast<float>(2 * i + 3 * j);
      plane[(i * 9 + j) * 2 + 1] = static_cast<float>(i * 100 + j);
    }
  float out[2];
  bilinear_read(plane, 4, 9, 2, 3, 7, out);
  CHECK(out[0] == 27.0f);
  CHECK(out[1] == 307.0f);
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const double r = uniform(rng, 0, 3), c = uniform(rng, 0, 8);
    bilinear_read(plane, 4, 9, 2, r, c, out);
    CHECK(out[0] == doctest::Approx(2 * r + 3 * c).epsilon(1e-6));
  }
  const std::vector<float> quad{1, 2, 3, 4};
  float q;
  bilinear_read(quad, 2, 2, 1, 0.5, 0.5, {&q, 1});
  CHECK(q == 2.5f);
}

TEST_CASE("constant texture projects to the constant") {
  auto f = make_fixture(0, 10);
  for (auto& v : f.tex.values()) v = 0.375f;
  const auto img = project(f.tex, f.buf);
  for (std::size_t i = 0; i < f.buf.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      const float v = img.data()[i * 3 + c];
      if (f.buf.hit(i))
        CHECK(v == doctest::Approx(0.375).epsilon(1e-6));
      else
        CHECK(v == 0.0f);
    }
}

TEST_CASE("projection equals the straight-line oracle bit for bit") {
  for (int k = 0; k < 3; ++k) {
    const auto f = make_fixture(k, 40 + k, 16);
    const auto a = project(f.tex, f.buf);
    CHECK(a == oracle::project(f.tex, f.buf));
    CHECK(a == project_serial(f.tex, f.buf));
  }
}

TEST_CASE("single-texel texture lights exactly its support") {
  auto f = make_fixture(1, 77, 4);
  Rng rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    for (auto& v : f.tex.values()) v = 0.0f;
    const std::size_t texel = (rng() % (f.tex.values().size() / 3)) * 3;
    f.tex.values()[texel] = 1.0f;
    const auto img = project(f.tex, f.buf);
    for (std::size_t i = 0; i < f.buf.size(); ++i) {
      bool in_support = false;
      if (f.buf.hit(i)) {
        const int o = f.buf.object[i];
        for (const auto& tw : pixel_support(f.tex.shape(), f.tex.boxes()[o], o, f.buf.point[i], f.buf.normal[i]))
          if (tw.offset == texel && tw.weight > 0) in_support = true;
      }
      CHECK((img.data()[i * 3] != 0.0f) == in_support);
    }
  }
}

TEST_CASE("projection is linear in the texture") {
  auto f = make_fixture(2, 3);
  auto t2 = NeuralTexture::random(f.tex.shape(), f.tex.boxes(), 99);
  NeuralTexture mix(f.tex.shape(), f.tex.boxes());
  const float alpha = 1.7f;
  for (std::size_t i = 0; i < mix.values().size(); ++i)
    mix.values()[i] = alpha * f.tex.values()[i] + t2.values()[i];
  const auto pm = project(mix, f.buf), p1 = project(f.tex, f.buf), p2 = project(t2, f.buf);
  for (std::size_t i = 0; i < pm.size(); ++i)
    CHECK(std::abs(pm.data()[i] - (alpha * p1.data()[i] + p2.data()[i])) <= 1e-6);
}

TEST_CASE("adjoint identity, zero gradient and support bound") {
  Rng rng(8);
  for (int k = 0; k < 5; ++k) {
    const auto f = make_fixture(k, 300 + k);
    Image g(f.buf.height, f.buf.width, 3);
    for (auto& v : g.data()) v = static_cast<float>(uniform(rng, -1, 1));
    const auto lhs = dot_images(project(f.tex, f.buf), g);
    const auto adj = project_adjoint(g, f.buf, f.tex);
    double rhs = 0;
    for (std::size_t i = 0; i < adj.size(); ++i) rhs += double(f.tex.values()[i]) * adj[i];
    CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(std::abs(lhs), 1e-12));
    CHECK(adj == project_adjoint_serial(g, f.buf, f.tex));
    CHECK(adj == project_adjoint(g, f.buf, f.tex, true));
  }
  auto f = make_fixture(0, 5);
  Image zero(f.buf.height, f.buf.width, 3);
  for (float v : project_adjoint(zero, f.buf, f.tex)) CHECK(v == 0.0f);
  for (std::size_t i = 0; i < f.buf.size(); i += 97) {
    if (!f.buf.hit(i)) continue;
    Image one(f.buf.height, f.buf.width, 3);
    one.data()[i * 3 + 1] = 1.0f;
    int nonzero = 0;
    for (float v : project_adjoint(one, f.buf, f.tex)) nonzero += v != 0.0f;
    CHECK(nonzero >= 1);
    CHECK(nonzero <= 12);
  }
}

TEST_CASE("finite differences through projection match the adjoint") {
  const auto f = make_fixture(3, 12, 8, 16, 32);
  NeuralTexture tex = f.tex;
  Image target(f.buf.height, f.buf.width, 3);
  Rng rng(4);
  for (auto& v : target.data()) v = static_cast<float>(uniform(rng, -0.2, 0.2));
  auto loss = [&](const NeuralTexture& t) {
    const auto p = project(t, f.buf);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = double(p.data()[i]) - target.data()[i];
      s += 0.5 * d * d;
    }
    return s;
  };
  const auto p = project(tex, f.buf);
  Image grad(f.buf.height, f.buf.width, 3);
  for (std::size_t i = 0; i < p.size(); ++i) grad.data()[i] = p.data()[i] - target.data()[i];
  const auto analytic = project_adjoint(grad, f.buf, tex);
  int checked = 0;
  for (std::size_t k = 0; k < analytic.size() && checked < 60; k += 7) {
    if (analytic[k] == 0.0f) continue;
    const float orig = tex.values()[k];
    const float h = 1e-2f;
    tex.values()[k] = orig + h;
    const double up = loss(tex);
    tex.values()[k] = orig - h;
    const double dn = loss(tex);
    tex.values()[k] = orig;
    const double fd = (up - dn) / (2.0 * h);
    CHECK(std::abs(fd - analytic[k]) <= 1e-4 * std::abs(analytic[k]) + 1e-5);
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("projection is continuous in the surface point") {
  const Aabb box{{0, 0, 0}, {10, 10, 10}};
  auto tex = NeuralTexture::random({1, kPlanes, 8, 8, 2}, {box}, 5, 1.0f);
  RayBuffer buf(1, 2);
  buf.object = {0, 0};
  const Vec3 n = Vec3{0.3, 0.5, 0.81} / norm(Vec3{0.3, 0.5, 0.81});
  buf.normal = {n, n};
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const Vec3 s{uniform(rng, 0, 10), uniform(rng, 0, 10), uniform(rng, 0, 10)};
    const double delta = 1e-5;
    buf.point = {s, s + Vec3{delta, -delta, delta}};
    const auto img = project(tex, buf);
    for (int c = 0; c < 2; ++c) CHECK(std::abs(img.at(0, 0, c) - img.at(0, 1, c)) < 1e-3);
  }
}

TEST_CASE("bad object id is a contract violation") {
  auto f = make_fixture(0, 2);
  f.buf.object[f.buf.size() / 2] = 17;
  CHECK_THROWS_AS(project(f.tex, f.buf), ContractViolation);
}

TEST_CASE("texture file round trip") {
  const auto f = make_fixture(0, 6);
  const auto path = std::filesystem::temp_directory_path() / "neurtex_test_tex" / "t.nttex";
  write_texture(path, f.tex);
  const auto back = read_texture(path, f.tex.boxes());
  CHECK(back.shape() == f.tex.shape());
  CHECK(std::equal(back.values().begin(), back.values().end(), f.tex.values().begin()));
  CHECK(std::filesystem::file_size(path) == 28 + f.tex.values().size() * 4);
}

}  // TEST_SUITE
