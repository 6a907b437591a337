#include <iostream>

#include <CLI11.hpp>

#include "toy.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic dataset, fixture backend and config for fudd", "fudd-toy"};
  fudd::toy::ToyOptions opt;
  std::string out;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--groups", opt.groups, "number of class groups")->check(CLI::PositiveNumber);
  app.add_option("--group-size", opt.group_size, "classes per group")->check(CLI::PositiveNumber);
  app.add_option("--images-per-class", opt.images_per_class)->check(CLI::PositiveNumber);
  app.add_option("--noise", opt.noise, "image noise standard deviation");
  app.add_option("--seed", opt.seed, "random seed")->required();
  app.add_flag("--collapse", opt.collapse, "identical single-template embeddings within a group");
  CLI11_PARSE(app, argc, argv);

  fudd::toy::write_toy_dataset(opt, out);
  std::cout << "wrote toy dataset to " << out << "\n";
  return 0;
}
