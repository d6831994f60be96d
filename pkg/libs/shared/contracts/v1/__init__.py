# namespace package
