#include "prsl/exact.hpp"
int main(){return 0;}
