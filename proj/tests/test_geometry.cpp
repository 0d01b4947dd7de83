#include <catch2/catch.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/rng.hpp"
#include "noboxlab/geometry/embedding.hpp"
#include "test_util.hpp"

using namespace noboxlab;

namespace {

Tensor random_rows(std::size_t n, std::size_t d, Rng& rng, bool normalize) {
    Tensor m({n, d});
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal();
    if (normalize) l2_normalize_rows(m);
    return m;
}

std::vector<double> unit(std::initializer_list<double> v) {
    std::vector<double> out(v);
    double n = l2_norm(out);
    for (double& x : out) x /= n;
    return out;
}

}

TEST_CASE("cosine similarity basics") {
    std::vector<double> u = {3.0, 4.0};
    CHECK(cosine_similarity(u, u) == Approx(1.0).margin(1e-12));

    std::vector<double> a = {1.0, 0.0}, b = {0.0, 2.0};
    CHECK(cosine_similarity(a, b) == Approx(0.0).margin(1e-12));

    std::vector<double> c = {1.0, 1.0};
    CHECK(cosine_similarity(a, c) == Approx(0.70710678).margin(1e-8));

    // Scale invariance.
    std::vector<double> u5 = {15.0, 20.0};
    CHECK(cosine_similarity(u, u5) == Approx(1.0).margin(1e-12));

    std::vector<double> zero = {0.0, 0.0};
    CHECK_THROWS_AS(cosine_similarity(u, zero), DomainError);
    CHECK_THROWS_AS(cosine_similarity(zero, u), DomainError);
    std::vector<double> wrong = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(cosine_similarity(u, wrong), ShapeError);
}

TEST_CASE("margin basics") {
    std::vector<double> f = {1.0, 0.0}, pos = {1.0, 0.0}, neg = {0.0, 1.0};
    double m = margin_delta(f, pos, neg);
    CHECK(m == Approx(1.0).margin(1e-12));
    // Distance form of the same quantity: (|f-neg|^2 - |f-pos|^2)/2 = (2-0)/2.
    CHECK(m == Approx(0.5 * (2.0 - 0.0)).margin(1e-12));

    CHECK(margin_delta(f, pos, pos) == Approx(0.0).margin(1e-15));

    std::vector<double> long_f = {2.0, 0.0};
    CHECK_THROWS_AS(margin_delta(long_f, pos, neg), PreconditionError);
    CHECK_THROWS_AS(margin_delta(f, long_f, neg), PreconditionError);
    CHECK_THROWS_AS(margin_delta(f, pos, long_f), PreconditionError);
}

TEST_CASE("margin similarity and distance forms agree on random unit triples") {
    Rng rng(313);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t d = 2 + static_cast<std::size_t>(rng.below(30));
        Tensor rows = random_rows(3, d, rng, true);
        std::span<const double> f(rows.data(), d);
        std::span<const double> pos(rows.data() + d, d);
        std::span<const double> neg(rows.data() + 2 * d, d);
        double sim_form = margin_delta(f, pos, neg);
        double d_pos = 0.0, d_neg = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            d_pos += (f[k] - pos[k]) * (f[k] - pos[k]);
            d_neg += (f[k] - neg[k]) * (f[k] - neg[k]);
        }
        double dist_form = 0.5 * (d_neg - d_pos);
        REQUIRE(std::fabs(sim_form - dist_form) < 1e-9);
    }
}

TEST_CASE("embedding batch flag validation") {
    Tensor ok({2, 3});
    ok.at2(0, 0) = 1.0;
    ok.at2(1, 1) = 1.0;
    CHECK_NOTHROW(EmbeddingBatch::make(ok, true));
    Tensor bad = ok;
    bad.at2(1, 1) = 1.1;
    CHECK_THROWS_AS(EmbeddingBatch::make(bad, true), PreconditionError);
    CHECK_NOTHROW(EmbeddingBatch::make(bad, false));

    CHECK_THROWS_AS(ClassAnchorSet::make(bad, AnchorProvider::explicit_anchors),
                    PreconditionError);
    CHECK_THROWS_AS(ContrastiveConfig::make(0.0), DomainError);
    CHECK_THROWS_AS(ContrastiveConfig::make(-1.0), DomainError);
}

TEST_CASE("contrastive loss degenerate cases") {
    Rng rng(99);
    for (double tau : {0.07, 1.0}) {
        ContrastiveConfig cfg = ContrastiveConfig::make(tau);
        // N = 1: both directional terms are log(exp(0)) = 0.
        EmbeddingBatch img = EmbeddingBatch::make(random_rows(1, 8, rng, true), true);
        EmbeddingBatch txt = EmbeddingBatch::make(random_rows(1, 8, rng, true), true);
        for (ContrastiveForm form : {ContrastiveForm::softmax, ContrastiveForm::relative,
                                     ContrastiveForm::distance})
            CHECK(clip_contrastive_loss(img, txt, cfg, form) == Approx(0.0).margin(1e-12));
    }

    // N = 4, all rows one identical unit vector, tau = 1: 2*ln 4.
    Tensor same({4, 6});
    std::vector<double> v = unit({0.3, -0.2, 0.5, 0.1, -0.7, 0.2});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j) same.at2(i, j) = v[j];
    EmbeddingBatch a = EmbeddingBatch::make(same, true);
    ContrastiveConfig cfg1 = ContrastiveConfig::make(1.0);
    for (ContrastiveForm form : {ContrastiveForm::softmax, ContrastiveForm::relative,
                                 ContrastiveForm::distance})
        CHECK(clip_contrastive_loss(a, a, cfg1, form) ==
              Approx(2.0 * std::log(4.0)).margin(1e-9));
}

TEST_CASE("softmax and relative forms agree on arbitrary batches") {
    Rng rng(500);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 1 + static_cast<std::size_t>(rng.below(16));
        std::size_t d = 2 + static_cast<std::size_t>(rng.below(31));
        double tau = (trial % 2 == 0) ? 0.07 : 1.0;
        // Non-unit rows: the identity must hold for any inputs.
        Tensor im = random_rows(n, d, rng, false);
        Tensor tx = random_rows(n, d, rng, false);
        for (std::size_t i = 0; i < im.size(); ++i) im[i] += 0.01;  // avoid zero rows
        EmbeddingBatch img = EmbeddingBatch::make(im, false);
        EmbeddingBatch txt = EmbeddingBatch::make(tx, false);
        ContrastiveConfig cfg = ContrastiveConfig::make(tau);
        double ls = clip_contrastive_loss(img, txt, cfg, ContrastiveForm::softmax);
        double lr = clip_contrastive_loss(img, txt, cfg, ContrastiveForm::relative);
        REQUIRE(std::fabs(ls - lr) <= 1e-5 * std::max(1.0, std::fabs(ls)));
    }
}

TEST_CASE("relative and distance forms agree on unit batches") {
    Rng rng(501);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 1 + static_cast<std::size_t>(rng.below(16));
        std::size_t d = 2 + static_cast<std::size_t>(rng.below(31));
        double tau = (trial % 2 == 0) ? 0.07 : 1.0;
        EmbeddingBatch img = EmbeddingBatch::make(random_rows(n, d, rng, true), true);
        EmbeddingBatch txt = EmbeddingBatch::make(random_rows(n, d, rng, true), true);
        ContrastiveConfig cfg = ContrastiveConfig::make(tau);
        double lr = clip_contrastive_loss(img, txt, cfg, ContrastiveForm::relative);
        double ld = clip_contrastive_loss(img, txt, cfg, ContrastiveForm::distance);
        REQUIRE(std::fabs(lr - ld) <= 1e-5 * std::max(1.0, std::fabs(lr)));
    }
}

TEST_CASE("contrastive loss is permutation-equivariant") {
    Rng rng(502);
    std::size_t n = 9, d = 12;
    EmbeddingBatch img = EmbeddingBatch::make(random_rows(n, d, rng, true), true);
    EmbeddingBatch txt = EmbeddingBatch::make(random_rows(n, d, rng, true), true);
    ContrastiveConfig cfg = ContrastiveConfig::make(0.07);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng prng(7);
    prng.shuffle(perm);
    Tensor pi({n, d}), pt({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            pi.at2(i, j) = img.vectors.at2(perm[i], j);
            pt.at2(i, j) = txt.vectors.at2(perm[i], j);
        }
    EmbeddingBatch pimg = EmbeddingBatch::make(pi, true);
    EmbeddingBatch ptxt = EmbeddingBatch::make(pt, true);
    for (ContrastiveForm form : {ContrastiveForm::softmax, ContrastiveForm::relative,
                                 ContrastiveForm::distance}) {
        double base = clip_contrastive_loss(img, txt, cfg, form);
        double permuted = clip_contrastive_loss(pimg, ptxt, cfg, form);
        CHECK(std::fabs(base - permuted) < 1e-9);
    }
}

TEST_CASE("contrastive loss input validation") {
    Rng rng(503);
    EmbeddingBatch a = EmbeddingBatch::make(random_rows(3, 4, rng, true), true);
    EmbeddingBatch b = EmbeddingBatch::make(random_rows(4, 4, rng, true), true);
    ContrastiveConfig cfg = ContrastiveConfig::make(0.07);
    CHECK_THROWS_AS(clip_contrastive_loss(a, b, cfg, ContrastiveForm::softmax),
                    ShapeError);

    EmbeddingBatch nonunit = EmbeddingBatch::make(random_rows(3, 4, rng, false), false);
    CHECK_THROWS_AS(clip_contrastive_loss(a, nonunit, cfg, ContrastiveForm::distance),
                    PreconditionError);
    CHECK_NOTHROW(clip_contrastive_loss(a, nonunit, cfg, ContrastiveForm::softmax));
}

TEST_CASE("margin audit on exact anchor embeddings") {
    Tensor anchors({2, 2});
    anchors.at2(0, 0) = 1.0;
    anchors.at2(1, 1) = 1.0;
    ClassAnchorSet set = ClassAnchorSet::make(anchors, AnchorProvider::explicit_anchors);

    Tensor embs({4, 2});
    embs.at2(0, 0) = 1.0;
    embs.at2(1, 0) = 1.0;
    embs.at2(2, 1) = 1.0;
    embs.at2(3, 1) = 1.0;
    EmbeddingBatch eb = EmbeddingBatch::make(embs, true);
    LabelVector lv = LabelVector::make({0, 0, 1, 1}, 2);

    MarginAudit audit = class_margin_audit(eb, lv, set);
    REQUIRE(audit.per_class.size() == 2);
    for (const ClassMarginStats& st : audit.per_class) {
        CHECK(st.present);
        CHECK(st.count == 2);
        CHECK(st.mean_own_similarity == Approx(1.0).margin(1e-12));
        CHECK(st.max_other_similarity == Approx(0.0).margin(1e-12));
        CHECK(st.min_margin == Approx(1.0).margin(1e-12));
        CHECK(st.mean_margin == Approx(1.0).margin(1e-12));
    }
    CHECK(audit.overall_min_margin == Approx(1.0).margin(1e-12));
}

TEST_CASE("margin audit with identical anchors is all zeros") {
    Tensor anchors({2, 3});
    std::vector<double> v = unit({0.5, 0.5, 0.1});
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < 3; ++j) anchors.at2(c, j) = v[j];
    ClassAnchorSet set = ClassAnchorSet::make(anchors, AnchorProvider::explicit_anchors);

    Rng rng(77);
    EmbeddingBatch eb = EmbeddingBatch::make(random_rows(5, 3, rng, true), true);
    LabelVector lv = LabelVector::make({0, 1, 0, 1, 0}, 2);
    MarginAudit audit = class_margin_audit(eb, lv, set);
    for (const ClassMarginStats& st : audit.per_class) {
        CHECK(st.min_margin == Approx(0.0).margin(1e-12));
        CHECK(st.mean_margin == Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("margin audit matches brute-force oracle on random data") {
    Rng rng(78);
    const std::size_t C = 3, d = 8, n = 40;
    ClassAnchorSet set =
        ClassAnchorSet::make(random_rows(C, d, rng, true), AnchorProvider::head_weights);
    EmbeddingBatch eb = EmbeddingBatch::make(random_rows(n, d, rng, true), true);
    std::vector<std::size_t> raw;
    for (std::size_t i = 0; i < n; ++i)
        raw.push_back(static_cast<std::size_t>(rng.below(C)));
    LabelVector lv = LabelVector::make(raw, C);

    MarginAudit audit = class_margin_audit(eb, lv, set);

    // Independent double loop using the distance expression for the margin.
    for (std::size_t c = 0; c < C; ++c) {
        double own_sum = 0.0, margin_sum = 0.0;
        double max_other = -1e300, min_margin = 1e300;
        std::size_t count = 0, pairs = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (raw[i] != c) continue;
            ++count;
            double own = 0.0;
            for (std::size_t k = 0; k < d; ++k)
                own += eb.row(i)[k] * set.anchor(c)[k];
            own_sum += own;
            for (std::size_t cp = 0; cp < C; ++cp) {
                if (cp == c) continue;
                double dp = 0.0, dn = 0.0, other = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    dp += (eb.row(i)[k] - set.anchor(c)[k]) * (eb.row(i)[k] - set.anchor(c)[k]);
                    dn += (eb.row(i)[k] - set.anchor(cp)[k]) * (eb.row(i)[k] - set.anchor(cp)[k]);
                    other += eb.row(i)[k] * set.anchor(cp)[k];
                }
                double m = 0.5 * (dn - dp);
                margin_sum += m;
                min_margin = std::min(min_margin, m);
                max_other = std::max(max_other, other);
                ++pairs;
            }
        }
        const ClassMarginStats& st = audit.per_class[c];
        REQUIRE(st.present == (count > 0));
        if (count == 0) continue;
        CHECK(st.count == count);
        CHECK(st.mean_own_similarity == Approx(own_sum / count).margin(1e-9));
        CHECK(st.max_other_similarity == Approx(max_other).margin(1e-9));
        CHECK(st.min_margin == Approx(min_margin).margin(1e-9));
        CHECK(st.mean_margin == Approx(margin_sum / pairs).margin(1e-9));
    }
}

TEST_CASE("margin audit marks empty classes absent") {
    Rng rng(79);
    ClassAnchorSet set =
        ClassAnchorSet::make(random_rows(3, 4, rng, true), AnchorProvider::explicit_anchors);
    EmbeddingBatch eb = EmbeddingBatch::make(random_rows(2, 4, rng, true), true);
    LabelVector lv = LabelVector::make({0, 0}, 3);
    MarginAudit audit = class_margin_audit(eb, lv, set);
    CHECK(audit.per_class[0].present);
    CHECK_FALSE(audit.per_class[1].present);
    CHECK_FALSE(audit.per_class[2].present);
    CHECK(audit.overall_min_margin == Approx(audit.per_class[0].min_margin));
}

TEST_CASE("margin audit validation") {
    Rng rng(80);
    ClassAnchorSet one =
        ClassAnchorSet::make(random_rows(1, 4, rng, true), AnchorProvider::explicit_anchors);
    EmbeddingBatch eb = EmbeddingBatch::make(random_rows(2, 4, rng, true), true);
    LabelVector lv = LabelVector::make({0, 0}, 1);
    CHECK_THROWS_AS(class_margin_audit(eb, lv, one), DomainError);

    ClassAnchorSet two =
        ClassAnchorSet::make(random_rows(2, 4, rng, true), AnchorProvider::explicit_anchors);
    EmbeddingBatch loose = EmbeddingBatch::make(random_rows(2, 4, rng, false), false);
    CHECK_THROWS_AS(class_margin_audit(loose, lv, two), PreconditionError);
}

TEST_CASE("embedding export writes parseable rows") {
    TempDir td;
    Tensor m({3, 2});
    m.at2(0, 0) = 0.123456789012;
    m.at2(0, 1) = -1.0;
    m.at2(1, 0) = 1e-11;
    m.at2(1, 1) = 0.5;
    m.at2(2, 0) = -0.999999999;
    m.at2(2, 1) = 2.5;
    EmbeddingBatch eb = EmbeddingBatch::make(m, false);
    LabelVector lv = LabelVector::make({0, 1, 2}, 3);
    std::string p = td.file("emb.csv");
    export_embeddings(eb, lv, {"s0", "s1", "s2"}, p);

    std::ifstream in(p);
    std::string header;
    REQUIRE(std::getline(in, header));
    CHECK(header == "id,label,e_0,e_1");
    std::size_t rows = 0;
    std::string line;
    std::vector<std::string> first_fields;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        REQUIRE(fields.size() == 4);
        if (rows == 0) first_fields = fields;
        // Values reparse to the originals.
        CHECK(std::stod(fields[2]) == Approx(m.at2(rows, 0)).margin(1e-9));
        CHECK(std::stod(fields[3]) == Approx(m.at2(rows, 1)).margin(1e-9));
        ++rows;
    }
    CHECK(rows == 3);
    CHECK(first_fields[0] == "s0");
    CHECK(first_fields[1] == "0");

    CHECK_THROWS_AS(export_embeddings(eb, lv, {"a"}, td.file("bad.csv")), ShapeError);
}

TEST_CASE("embedding export preserves order at scale") {
    TempDir td;
    const std::size_t n = 10000, d = 64;
    Rng rng(81);
    Tensor m({n, d});
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal();
    std::vector<std::string> ids(n);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "id%05zu", i);
        ids[i] = buf;
        labels[i] = i % 10;
    }
    std::string p = td.file("big.csv");
    export_embeddings(EmbeddingBatch::make(m, false),
                      LabelVector::make(labels, 10), ids, p);

    std::ifstream in(p);
    std::string line;
    std::size_t count = 0;
    std::string prev_id;
    while (std::getline(in, line)) {
        if (count > 0) {
            std::string id = line.substr(0, line.find(','));
            if (count > 1) CHECK(prev_id < id);
            prev_id = id;
        }
        ++count;
    }
    CHECK(count == n + 1);
}
