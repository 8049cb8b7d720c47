#include <pybind11/pybind11.h>
PYBIND11_MODULE(_cellmix, m) { m.doc() = "cellmix"; }
