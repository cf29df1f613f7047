#include "spectral_core/convspec.hpp"

namespace spectral_core {

namespace {

// Visits every (output index, filter tap, input pixel) triple whose pixel
// lies inside the unpadded image, in row-major output then tap order.
template <typename Fn>
void for_each_tap(const ConvSpec& spec, Fn&& fn) {
  const std::size_t out_h = spec.output_height();
  const std::size_t out_w = spec.output_width();
  const auto fh = spec.filter.rows();
  const auto fw = spec.filter.cols();
  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t c = 0; c < out_w; ++c) {
      for (std::size_t a = 0; a < fh; ++a) {
        for (std::size_t b = 0; b < fw; ++b) {
          const auto y = static_cast<std::ptrdiff_t>(r * spec.stride_y + a) - static_cast<std::ptrdiff_t>(spec.pad_y);
          const auto x = static_cast<std::ptrdiff_t>(c * spec.stride_x + b) - static_cast<std::ptrdiff_t>(spec.pad_x);
          if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(spec.input_height) ||
              x >= static_cast<std::ptrdiff_t>(spec.input_width)) {
            continue;
          }
          fn(r * out_w + c, spec.filter(a, b),
             static_cast<std::size_t>(y) * spec.input_width + static_cast<std::size_t>(x));
        }
      }
    }
  }
}

}  // namespace

std::size_t ConvSpec::output_height() const {
  validate();
  return (input_height + 2 * pad_y - filter.rows()) / stride_y + 1;
}

std::size_t ConvSpec::output_width() const {
  validate();
  return (input_width + 2 * pad_x - filter.cols()) / stride_x + 1;
}

void ConvSpec::validate() const {
  if (input_height == 0 || input_width == 0) throw ShapeError("conv: empty input");
  if (filter.rows() == 0 || filter.cols() == 0) throw ShapeError("conv: empty filter");
  if (stride_x == 0 || stride_y == 0) throw ShapeError("conv: strides must be positive");
  if (filter.rows() > input_height + 2 * pad_y || filter.cols() > input_width + 2 * pad_x)
    throw ShapeError("conv: filter larger than padded input");
}

Matrix direct_conv2d(const Matrix& x, const ConvSpec& spec) {
  spec.validate();
  if (x.rows() != spec.input_height || x.cols() != spec.input_width)
    throw ShapeError("direct_conv2d: input shape does not match spec");
  const std::size_t out_h = spec.output_height();
  const std::size_t out_w = spec.output_width();
  const auto ph = static_cast<std::ptrdiff_t>(spec.pad_y);
  const auto pw = static_cast<std::ptrdiff_t>(spec.pad_x);
  Matrix out(out_h, out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t c = 0; c < out_w; ++c) {
      double acc = 0.0;
      for (std::size_t a = 0; a < spec.filter.rows(); ++a) {
        const auto y = static_cast<std::ptrdiff_t>(r * spec.stride_y + a) - ph;
        if (y < 0 || y >= static_cast<std::ptrdiff_t>(x.rows())) continue;
        for (std::size_t b = 0; b < spec.filter.cols(); ++b) {
          const auto xx = static_cast<std::ptrdiff_t>(c * spec.stride_x + b) - pw;
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(x.cols())) continue;
          acc += spec.filter(a, b) * x(static_cast<std::size_t>(y), static_cast<std::size_t>(xx));
        }
      }
      out(r, c) = acc;
    }
  }
  return out;
}

ToeplitzOperator toeplitz_matrix(const ConvSpec& spec) {
  ToeplitzOperator op{Matrix(spec.output_size(), spec.input_size()), spec};
  for_each_tap(spec, [&](std::size_t out, double w, std::size_t pixel) { op.matrix(out, pixel) = w; });
  return op;
}

Vector DuplicatedForm::duplicate(std::span<const double> x) const {
  Vector out(duplication_map.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (duplication_map[c] >= x.size()) throw ShapeError("duplicate: input too short");
    out[c] = x[duplication_map[c]];
  }
  return out;
}

Vector DuplicatedForm::apply(std::span<const double> x) const {
  return matvec(binary_phi, hadamard(lambda_in, duplicate(x)));
}

DuplicatedForm duplicated_form(const ConvSpec& spec) {
  std::vector<std::size_t> rows;
  DuplicatedForm form;
  for_each_tap(spec, [&](std::size_t out, double w, std::size_t pixel) {
    rows.push_back(out);
    form.duplication_map.push_back(pixel);
    form.lambda_in.push_back(w);
  });
  form.binary_phi = Matrix(spec.output_size(), rows.size());
  for (std::size_t c = 0; c < rows.size(); ++c) form.binary_phi(rows[c], c) = 1.0;
  return form;
}

SpectralLayer conv_as_lambda_in(const ConvSpec& spec) {
  DuplicatedForm form = duplicated_form(spec);
  SpectralLayer layer;
  layer.phi = std::move(form.binary_phi);
  layer.lambda_in = std::move(form.lambda_in);
  layer.lambda_out.assign(layer.phi.rows(), 0.0);
  layer.lambda_in_trainable = true;
  layer.lambda_out_trainable = false;
  return layer;
}

SpectralLayer conv_filter_relevance(const ConvSpec& spec, double relevance) {
  SpectralLayer layer;
  layer.phi = toeplitz_matrix(spec).matrix;
  layer.lambda_in.assign(layer.phi.cols(), 1.0);
  layer.lambda_out.assign(layer.phi.rows(), 1.0 - relevance);
  layer.lambda_in_trainable = false;
  layer.lambda_out_trainable = true;
  return layer;
}

}  // namespace spectral_core
