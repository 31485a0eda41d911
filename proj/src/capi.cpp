#include "gpecm/gpecm.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "gpecm/error.hpp"
#include "gpecm/pipeline.hpp"

struct gpecm_config {
  nlohmann::json json;
  gpecm::RunConfig run;
};

struct gpecm_posterior {
  gpecm::SmoothedPosterior post;
};

namespace {

thread_local std::string g_last_error;

gpecm_status fail(gpecm_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
gpecm_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return GPECM_OK;
  } catch (const gpecm::Error& e) {
    return fail(static_cast<gpecm_status>(static_cast<int>(e.kind())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(GPECM_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(GPECM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(GPECM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(GPECM_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

nlohmann::json as_array(const std::vector<std::string>& v) { return nlohmann::json(v); }

}  // namespace

extern "C" {

const char* gpecm_version(void) { return "0.1.0"; }

const char* gpecm_status_name(gpecm_status s) {
  switch (s) {
    case GPECM_OK: return "ok";
    case GPECM_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case GPECM_ERR_CONFIG: return "config_error";
    case GPECM_ERR_DATA: return "data_error";
    case GPECM_ERR_NUMERICAL: return "numerical_failure";
    case GPECM_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* gpecm_last_error(void) { return g_last_error.c_str(); }

void gpecm_string_free(char* s) { std::free(s); }

size_t gpecm_hyper_count(void) { return gpecm::kHyperCount; }

const char* gpecm_hyper_name(size_t i) {
  return i < static_cast<size_t>(gpecm::kHyperCount) ? gpecm::hyper_name(static_cast<int>(i)) : nullptr;
}

gpecm_status gpecm_config_load(const char* path, const char* const* overrides, size_t n, gpecm_config** out) {
  if (!out) return fail(GPECM_ERR_INVALID_ARGUMENT, "output handle is null");
  *out = nullptr;
  if (n && !overrides) return fail(GPECM_ERR_INVALID_ARGUMENT, "override list is null");
  return guarded([&] {
    std::vector<std::string> ov;
    for (size_t k = 0; k < n; ++k) {
      if (!overrides[k]) throw gpecm::InvalidArgument("override entry is null");
      ov.emplace_back(overrides[k]);
    }
    auto cfg = std::make_unique<gpecm_config>();
    cfg->run = gpecm::load_config(path ? path : "", ov);
    cfg->json = cfg->run.source;
    *out = cfg.release();
  });
}

gpecm_status gpecm_config_set(gpecm_config* c, const char* assignment) {
  if (!c || !assignment) return fail(GPECM_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    nlohmann::json j = c->json;
    gpecm::apply_override(j, assignment);
    c->run = gpecm::parse_config(j);
    c->json = c->run.source;
  });
}

gpecm_status gpecm_config_dump(const gpecm_config* c, char** out) {
  if (!c || !out) return fail(GPECM_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { put(out, c->json.dump(2)); });
}

void gpecm_config_free(gpecm_config* c) { delete c; }

gpecm_status gpecm_simulate(const gpecm_config* c, char** summary) {
  if (!c) return fail(GPECM_ERR_INVALID_ARGUMENT, "config is null");
  return guarded([&] {
    const gpecm::SimulateSummary s = gpecm::cmd_simulate(c->run);
    put(summary, nlohmann::json{{"files", s.files}, {"manifest", s.manifest}, {"samples", s.samples}}.dump(2));
  });
}

gpecm_status gpecm_fit(const gpecm_config* c, int stage, char** path) {
  if (!c) return fail(GPECM_ERR_INVALID_ARGUMENT, "config is null");
  return guarded([&] { put(path, gpecm::cmd_fit(c->run, stage)); });
}

gpecm_status gpecm_estimate(const gpecm_config* c, char** written) {
  if (!c) return fail(GPECM_ERR_INVALID_ARGUMENT, "config is null");
  return guarded([&] { put(written, as_array(gpecm::cmd_estimate(c->run)).dump(2)); });
}

gpecm_status gpecm_forecast(const gpecm_config* c, char** written) {
  if (!c) return fail(GPECM_ERR_INVALID_ARGUMENT, "config is null");
  return guarded([&] { put(written, as_array(gpecm::cmd_forecast(c->run)).dump(2)); });
}

gpecm_status gpecm_validate(const gpecm_config* c, char** table) {
  if (!c) return fail(GPECM_ERR_INVALID_ARGUMENT, "config is null");
  return guarded([&] {
    std::string text;
    gpecm::cmd_validate(c->run, &text);
    put(table, text);
  });
}

gpecm_status gpecm_nlml(const gpecm_config* c, const double* theta, size_t n, double* phi) {
  if (!c || !theta || !phi) return fail(GPECM_ERR_INVALID_ARGUMENT, "null argument");
  if (n != static_cast<size_t>(gpecm::kHyperCount))
    return fail(GPECM_ERR_INVALID_ARGUMENT, "expected " + std::to_string(gpecm::kHyperCount) + " hyperparameters");
  return guarded([&] {
    gpecm::HyperParams h;
    for (size_t k = 0; k < n; ++k) h.value[k] = theta[k];
    h.validate();
    const std::vector<gpecm::CellData> cells = gpecm::load_cells(c->run);
    gpecm::ModelSetup setup = c->run.model;
    if (c->run.fit.auto_ranges) gpecm::auto_ranges(cells, setup);
    gpecm::NlmlDiagnostics diag;
    *phi = gpecm::nlml(h, cells, setup, &diag);
    if (!diag.finite) throw gpecm::NumericalError("filter failed: " + diag.failure);
  });
}

gpecm_status gpecm_posterior_create(const gpecm_config* c, size_t cell, gpecm_posterior** out) {
  if (!c || !out) return fail(GPECM_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    const gpecm::FitArtifact fit = gpecm::best_fit(c->run);
    const std::vector<gpecm::CellData> cells = gpecm::load_cells(c->run);
    if (cell >= cells.size()) throw gpecm::InvalidArgument("cell index out of range");
    auto p = std::make_unique<gpecm_posterior>();
    p->post = gpecm::estimate_cell(cells[cell], fit.theta, fit.setup).smoothed;
    *out = p.release();
  });
}

gpecm_status gpecm_posterior_range(const gpecm_posterior* p, double* first, double* last, size_t* n) {
  if (!p) return fail(GPECM_ERR_INVALID_ARGUMENT, "posterior is null");
  return guarded([&] {
    if (first) *first = p->post.first_zeta();
    if (last) *last = p->post.last_zeta();
    if (n) *n = p->post.size();
  });
}

gpecm_status gpecm_posterior_query(const gpecm_posterior* p, double zeta, gpecm_field field, double z, double current,
                                   double* mean, double* sd) {
  if (!p || !mean) return fail(GPECM_ERR_INVALID_ARGUMENT, "null argument");
  if (field < GPECM_FIELD_Q_INV || field > GPECM_FIELD_R0) return fail(GPECM_ERR_INVALID_ARGUMENT, "unknown field");
  return guarded([&] {
    const gpecm::ParameterEstimate e =
        p->post.query(zeta, {static_cast<gpecm::FieldId>(static_cast<int>(field)), z, current});
    *mean = e.smooth_mean;
    if (sd) *sd = e.smooth_sd;
  });
}

void gpecm_posterior_free(gpecm_posterior* p) { delete p; }

}  // extern "C"
